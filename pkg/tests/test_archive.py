"""Archive format: raw little-endian float32 blobs plus a canonical manifest.

Tensors are quantized to 32-bit on save, so load-after-save is only close to
the original; save-after-load must reproduce the directory byte for byte.
"""
import json

import pytest
import torch

from ipl.archive import (
    FORMAT_VERSION,
    KIND_GENERATOR,
    KIND_MAPPER,
    load_archive,
    load_generator,
    load_mapper,
    mapper_architecture,
    save_archive,
    save_generator,
    save_mapper,
)
from ipl.core import DTYPE, RunConfig, seeded_rng
from ipl.errors import ArchiveError
from ipl.generators import toy_generator
from ipl.mapper import LatentMapper, init_mapper
from ipl.encoders import ToyTextEncoder


def _tensors():
    return {
        "fc1.weight": torch.randn((3, 2), generator=seeded_rng(0), dtype=DTYPE),
        "fc1.bias": torch.randn(3, generator=seeded_rng(1), dtype=DTYPE),
        "scale": torch.tensor(2.5, dtype=DTYPE),
    }


def _dir_bytes(root):
    return {p.name: p.read_bytes() for p in sorted(root.iterdir())}


def test_round_trip_values_at_float32_precision(tmp_path):
    tensors = _tensors()
    save_archive(tmp_path / "a", "test", tensors, architecture="x/y")
    ar = load_archive(tmp_path / "a")
    assert ar.kind == "test"
    assert ar.architecture == "x/y"
    assert set(ar.tensors) == set(tensors)
    for name in tensors:
        assert ar.tensors[name].shape == tensors[name].shape
        assert ar.tensors[name].dtype == DTYPE
        assert torch.allclose(ar.tensors[name], tensors[name], atol=1e-6, rtol=0)


def test_save_after_load_is_byte_identical(tmp_path):
    cfg = RunConfig(seed=5)
    save_archive(
        tmp_path / "a", "test", _tensors(), architecture="x/y", config=cfg, seed=5
    )
    ar = load_archive(tmp_path / "a")
    save_archive(
        tmp_path / "b", ar.kind, ar.tensors,
        architecture=ar.architecture, config=ar.config, seed=ar.seed,
    )
    assert _dir_bytes(tmp_path / "a") == _dir_bytes(tmp_path / "b")


def test_manifest_layout_and_config_snapshot(tmp_path):
    cfg = RunConfig(seed=9, m=3)
    save_archive(tmp_path / "a", "test", _tensors(), config=cfg, seed=9)
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["format_version"] == FORMAT_VERSION
    assert manifest["kind"] == "test"
    assert manifest["seed"] == 9
    assert manifest["config"]["m"] == 3
    assert manifest["config"]["lambda"] == cfg.lambda_
    names = [e["name"] for e in manifest["tensors"]]
    assert names == sorted(names)
    for entry in manifest["tensors"]:
        blob = (tmp_path / "a" / entry["file"]).read_bytes()
        expected = 4
        for s in entry["shape"]:
            expected *= s
        assert len(blob) == expected


def test_scalar_tensor_round_trips(tmp_path):
    save_archive(tmp_path / "a", "test", {"scale": torch.tensor(2.5, dtype=DTYPE)})
    ar = load_archive(tmp_path / "a")
    assert ar.tensors["scale"].shape == ()
    assert float(ar.tensors["scale"]) == 2.5


def test_unsafe_tensor_names_are_rejected(tmp_path):
    for name in ("a/b", "a\\b", "..", "", "."):
        with pytest.raises(ArchiveError, match="file name"):
            save_archive(tmp_path / "a", "test", {name: torch.zeros(1, dtype=DTYPE)})


def test_load_corruption_cases(tmp_path):
    root = tmp_path / "a"
    save_archive(root, "test", _tensors())

    with pytest.raises(ArchiveError, match="no manifest"):
        load_archive(tmp_path / "missing")

    good = (root / "manifest.json").read_text()

    (root / "manifest.json").write_text("{not json")
    with pytest.raises(ArchiveError, match="not valid JSON"):
        load_archive(root)

    manifest = json.loads(good)
    manifest["format_version"] = 99
    (root / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(ArchiveError, match="format_version"):
        load_archive(root)

    manifest = json.loads(good)
    manifest["tensors"][0]["dtype"] = "float64"
    (root / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(ArchiveError, match="dtype"):
        load_archive(root)

    (root / "manifest.json").write_text(good)
    blob = root / "fc1.bias.bin"
    blob.write_bytes(blob.read_bytes()[:-1])
    with pytest.raises(ArchiveError, match="bytes"):
        load_archive(root)

    blob.unlink()
    with pytest.raises(ArchiveError, match="missing tensor file"):
        load_archive(root)


def test_generator_round_trip(tmp_path):
    gen = toy_generator(3, 4, 6)
    with torch.no_grad():
        gen.fc2.bias.add_(0.25)
    save_generator(tmp_path / "g", gen, config=RunConfig(), seed=3)
    loaded = load_generator(tmp_path / "g")
    assert loaded.architecture == gen.architecture
    w = torch.randn(4, generator=seeded_rng(4), dtype=DTYPE)
    assert torch.allclose(
        loaded.synthesize(w).detach(), gen.synthesize(w).detach(), atol=1e-5, rtol=0
    )


def test_mapper_round_trip(tmp_path):
    cfg = RunConfig(latent_dim=4, clip_dim=6, m=2)
    enc = ToyTextEncoder(seed=1, k=6)
    mapper = init_mapper(cfg, enc, seeded_rng(2))
    save_mapper(tmp_path / "m", mapper, config=cfg, seed=2)
    loaded = load_mapper(tmp_path / "m")
    assert mapper_architecture(loaded) == mapper_architecture(mapper)
    w = torch.randn(4, generator=seeded_rng(5), dtype=DTYPE)
    assert torch.allclose(loaded(w).detach(), mapper(w).detach(), atol=1e-5, rtol=0)


def test_kind_checks_cross_loading(tmp_path):
    gen = toy_generator(3, 4, 6)
    save_generator(tmp_path / "g", gen)
    cfg = RunConfig(latent_dim=4, clip_dim=6, m=2)
    mapper = init_mapper(cfg, ToyTextEncoder(seed=1, k=6), seeded_rng(2))
    save_mapper(tmp_path / "m", mapper)
    with pytest.raises(ArchiveError, match="not a generator"):
        load_generator(tmp_path / "m")
    with pytest.raises(ArchiveError, match="not a latent mapper"):
        load_mapper(tmp_path / "g")


def test_load_rejects_architecture_that_does_not_fit(tmp_path):
    mapper = LatentMapper(latent_dim=4, m=2, k=6)
    save_mapper(tmp_path / "m", mapper)
    manifest_path = tmp_path / "m" / "manifest.json"
    manifest = json.loads(manifest_path.read_text())
    manifest["architecture"] = "mlp4/d4-h99-m2-k6"
    manifest_path.write_text(json.dumps(manifest))
    with pytest.raises(ArchiveError, match="do not fit"):
        load_mapper(tmp_path / "m")

    manifest["architecture"] = "resnet/whatever"
    manifest_path.write_text(json.dumps(manifest))
    with pytest.raises(ArchiveError, match="not a mapper architecture"):
        load_mapper(tmp_path / "m")


def test_generator_rejects_foreign_architecture(tmp_path):
    gen = toy_generator(3, 4, 6)
    save_generator(tmp_path / "g", gen)
    manifest_path = tmp_path / "g" / "manifest.json"
    manifest = json.loads(manifest_path.read_text())
    manifest["architecture"] = "stylegan2/ffhq"
    manifest_path.write_text(json.dumps(manifest))
    with pytest.raises(ValueError, match="not a toy generator"):
        load_generator(tmp_path / "g")
