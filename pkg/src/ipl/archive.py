"""Tensor archives: a directory with a manifest plus raw tensor files.

Layout: ``manifest.json`` describes the archive (kind, architecture, tensor
names/shapes, config snapshot, seed, format_version) and each tensor lives in
its own file of little-endian 32-bit floats, row-major, no header, exactly
4 * prod(shape) bytes. Writing is deterministic: tensors are emitted in
sorted name order and the manifest is canonical JSON, so re-saving a loaded
archive reproduces it byte for byte.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .core import DTYPE, RunConfig
from .errors import ArchiveError
from .generators import ParameterSet, ToyGenerator, load_parameter_set, parse_toy_architecture
from .mapper import LatentMapper

FORMAT_VERSION = 1

KIND_MAPPER = "latent_mapper"
KIND_SHARED = "shared_prompts"
KIND_GENERATOR = "generator"


def _tensor_file(name: str) -> str:
    # Parameter names like "fc1.weight" are already safe path components;
    # reject anything that is not, rather than silently mangling.
    if "/" in name or "\\" in name or name in (".", "..") or not name:
        raise ArchiveError(f"tensor name {name!r} cannot be used as a file name")
    return name + ".bin"


@dataclass
class Archive:
    kind: str
    architecture: str
    tensors: dict[str, torch.Tensor]
    config: dict | None
    seed: int | None


def save_archive(
    path,
    kind: str,
    tensors: ParameterSet,
    architecture: str = "",
    config: RunConfig | dict | None = None,
    seed: int | None = None,
) -> Path:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for name in sorted(tensors):
        tensor = tensors[name].detach()
        data = np.ascontiguousarray(tensor.cpu().numpy(), dtype="<f4")
        fname = _tensor_file(name)
        (root / fname).write_bytes(data.tobytes())
        entries.append(
            {
                "name": name,
                "file": fname,
                "shape": list(tensor.shape),
                "dtype": "float32",
            }
        )
    manifest = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "architecture": architecture,
        "seed": seed,
        "config": config.to_dict() if isinstance(config, RunConfig) else config,
        "tensors": entries,
    }
    (root / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return root


def load_archive(path) -> Archive:
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise ArchiveError(f"no manifest.json under {root}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ArchiveError(f"manifest is not valid JSON: {e}") from e
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise ArchiveError(f"unsupported format_version {version!r}, expected {FORMAT_VERSION}")
    tensors: dict[str, torch.Tensor] = {}
    for entry in manifest.get("tensors", []):
        name, fname, shape = entry["name"], entry["file"], tuple(entry["shape"])
        if entry.get("dtype") != "float32":
            raise ArchiveError(f"tensor {name!r} has unsupported dtype {entry.get('dtype')!r}")
        blob_path = root / fname
        if not blob_path.exists():
            raise ArchiveError(f"missing tensor file {fname!r}")
        blob = blob_path.read_bytes()
        expected = 4 * math.prod(shape) if shape else 4
        if len(blob) != expected:
            raise ArchiveError(
                f"tensor file {fname!r} has {len(blob)} bytes, expected {expected}"
            )
        array = np.frombuffer(blob, dtype="<f4").reshape(shape)
        tensors[name] = torch.from_numpy(array.astype(np.float64)).to(DTYPE)
    return Archive(
        kind=manifest.get("kind", ""),
        architecture=manifest.get("architecture", ""),
        tensors=tensors,
        config=manifest.get("config"),
        seed=manifest.get("seed"),
    )


def save_generator(path, gen: ToyGenerator, config: RunConfig | None = None,
                   seed: int | None = None) -> Path:
    params = {name: p.detach().clone() for name, p in gen.named_parameters()}
    return save_archive(
        path, KIND_GENERATOR, params,
        architecture=gen.architecture, config=config, seed=seed,
    )


def load_generator(path) -> ToyGenerator:
    ar = load_archive(path)
    if ar.kind != KIND_GENERATOR:
        raise ArchiveError(f"archive kind {ar.kind!r} is not a generator")
    spec = parse_toy_architecture(ar.architecture)
    gen = ToyGenerator(
        seed=ar.seed if ar.seed is not None else 0,
        latent_dim=spec["latent_dim"],
        output_dim=spec["output_dim"],
        hidden_dim=spec["hidden_dim"],
        activation=spec["activation"],
    )
    try:
        load_parameter_set(gen, ar.tensors)
    except Exception as e:
        raise ArchiveError(f"generator parameters do not fit the architecture: {e}") from e
    return gen


def mapper_architecture(mapper: LatentMapper) -> str:
    return f"mlp4/d{mapper.latent_dim}-h{mapper.hidden_dim}-m{mapper.m}-k{mapper.k}"


def save_mapper(path, mapper: LatentMapper, config: RunConfig | None = None,
                seed: int | None = None) -> Path:
    params = {name: p.detach().clone() for name, p in mapper.named_parameters()}
    return save_archive(
        path, KIND_MAPPER, params,
        architecture=mapper_architecture(mapper), config=config, seed=seed,
    )


def load_mapper(path) -> LatentMapper:
    ar = load_archive(path)
    if ar.kind != KIND_MAPPER:
        raise ArchiveError(f"archive kind {ar.kind!r} is not a latent mapper")
    try:
        kind, rest = ar.architecture.split("/", 1)
        if kind != "mlp4":
            raise ValueError
        d, h, m, k = rest.split("-", 3)
        mapper = LatentMapper(int(d[1:]), int(m[1:]), int(k[1:]), hidden_dim=int(h[1:]))
    except (ValueError, IndexError):
        raise ArchiveError(f"not a mapper architecture: {ar.architecture!r}") from None
    try:
        load_parameter_set(mapper, ar.tensors)
    except Exception as e:
        raise ArchiveError(f"mapper parameters do not fit the architecture: {e}") from e
    return mapper
