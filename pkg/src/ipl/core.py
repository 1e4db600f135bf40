"""Domain types, run configuration, and deterministic seeding.

Everything in this package computes in float64 on CPU. Value types wrap plain
torch tensors; they validate on construction and are treated as read-only.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

import torch

from .errors import ConfigError, DimensionMismatchError

DTYPE = torch.float64

#: An embedding is a plain 1-D float64 tensor in the shared CLIP-like space.
EmbeddingVector = torch.Tensor

PROMPT_SCHEMES = ("manual_fixed", "learned_fixed", "random", "adaptive")


def seeded_rng(seed: int) -> torch.Generator:
    """Return a fresh CPU random stream for ``seed``.

    The same seed yields a bit-identical stream on one platform. Streams are
    single-owner: pass a generator to exactly one consumer and never share it
    across threads.
    """
    gen = torch.Generator(device="cpu")
    gen.manual_seed(int(seed))
    return gen


def stable_seed(*parts) -> int:
    """Derive a reproducible sub-seed from arbitrary string-able parts.

    Used to give independent components (backends, ablation cells) disjoint
    streams without consuming from a shared generator.
    """
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") & 0x7FFF_FFFF_FFFF_FFFF


def _require_finite(t: torch.Tensor, what: str) -> None:
    if not torch.isfinite(t).all():
        raise ValueError(f"{what} must contain only finite entries")


@dataclass(frozen=True)
class LatentCode:
    """A single latent vector w."""

    values: torch.Tensor

    def __post_init__(self):
        if self.values.ndim != 1:
            raise DimensionMismatchError(
                f"latent code must be 1-D, got shape {tuple(self.values.shape)}"
            )
        _require_finite(self.values, "latent code")

    @property
    def dim(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class LatentBatch:
    """An ordered batch of latent codes, stored as one (n, d) tensor."""

    tensor: torch.Tensor

    def __post_init__(self):
        if self.tensor.ndim != 2 or self.tensor.shape[0] < 1:
            raise DimensionMismatchError(
                f"latent batch must be (n >= 1, d), got shape {tuple(self.tensor.shape)}"
            )
        _require_finite(self.tensor, "latent batch")

    @classmethod
    def from_codes(cls, codes: Sequence[LatentCode]) -> "LatentBatch":
        return cls(torch.stack([c.values for c in codes]))

    @property
    def codes(self) -> tuple[LatentCode, ...]:
        return tuple(LatentCode(row) for row in self.tensor)

    @property
    def dim(self) -> int:
        return self.tensor.shape[1]

    def __len__(self) -> int:
        return self.tensor.shape[0]

    def __getitem__(self, i: int) -> LatentCode:
        return LatentCode(self.tensor[i])


@dataclass(frozen=True)
class PromptMatrix:
    """Prompt block stacked on top of label token embeddings.

    ``prompt_vectors`` is the (m, k) learned or fixed block, ``label_tokens``
    the (t, k) embeddings of the domain label's words. Encoders consume the
    concatenated (m + t, k) rows.
    """

    prompt_vectors: torch.Tensor
    label_tokens: torch.Tensor

    def __post_init__(self):
        pv, lt = self.prompt_vectors, self.label_tokens
        if pv.ndim != 2 or pv.shape[0] < 1:
            raise DimensionMismatchError(
                f"prompt block must be (m >= 1, k), got shape {tuple(pv.shape)}"
            )
        if lt.ndim != 2 or lt.shape[0] < 1:
            raise DimensionMismatchError(
                f"label block must be (t >= 1, k), got shape {tuple(lt.shape)}"
            )
        if pv.shape[1] != lt.shape[1]:
            raise DimensionMismatchError(
                f"prompt width {pv.shape[1]} != label width {lt.shape[1]}"
            )
        _require_finite(pv, "prompt block")
        _require_finite(lt, "label block")

    def rows(self) -> torch.Tensor:
        return torch.cat([self.prompt_vectors, self.label_tokens], dim=0)

    @property
    def m(self) -> int:
        return self.prompt_vectors.shape[0]

    @property
    def t(self) -> int:
        return self.label_tokens.shape[0]

    @property
    def k(self) -> int:
        return self.prompt_vectors.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return (self.m + self.t, self.k)


@dataclass(frozen=True)
class DomainLabel:
    """A human-readable domain name plus its role in the run."""

    text: str
    role: str

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("domain label text must be non-empty")
        if self.role not in ("source", "target"):
            raise ValueError(f"domain label role must be source|target, got {self.role!r}")


# --------------------------------------------------------------------------
# Run configuration
# --------------------------------------------------------------------------

# Dataclass attribute -> JSON key. Only "lambda" needs a spelling fix because
# it is a Python keyword; every other key matches its attribute name.
_JSON_KEYS = {"lambda_": "lambda"}

_INT_FIELDS = {
    "m", "n_stage1", "n_stage2", "iters_stage1", "iters_stage2", "seed",
    "freeze_top_k", "latent_dim", "clip_dim", "image_dim",
}
_FLOAT_FIELDS = {
    "lambda_", "lr_mapper", "lr_generator", "ema_decay",
    "adam_beta1", "adam_beta2", "adam_eps", "clone_jitter",
}


@dataclass(frozen=True)
class RunConfig:
    """Hyperparameters for one run; the JSON schema mirrors these fields.

    The defaults follow the reference recipe: m=4 prompt vectors, 300
    iterations per stage, batch 32 for prompt learning and 2 for adaptation,
    Adam at 0.05 / 0.002, EMA decay 0.99. Geometry fields (latent_dim,
    clip_dim, image_dim) size the toy backend; adapter backends carry their
    own geometry and must agree with these values.
    """

    m: int = 4
    lambda_: float = 1.0
    n_stage1: int = 32
    n_stage2: int = 2
    iters_stage1: int = 300
    iters_stage2: int = 300
    lr_mapper: float = 0.05
    lr_generator: float = 0.002
    ema_decay: float = 0.99
    seed: int = 0
    prompt_scheme: str = "adaptive"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    clone_jitter: float = 1e-4
    freeze_top_k: int = 2
    latent_dim: int = 8
    clip_dim: int = 16
    image_dim: int = 64

    def validate(self) -> None:
        def bad(key: str, why: str):
            return ConfigError(f"config key {key!r}: {why}")

        if self.m < 1:
            raise bad("m", f"must be >= 1, got {self.m}")
        for key in ("n_stage1", "n_stage2", "iters_stage1", "iters_stage2",
                    "freeze_top_k", "latent_dim", "clip_dim", "image_dim"):
            if getattr(self, key) < 1:
                raise bad(key, f"must be >= 1, got {getattr(self, key)}")
        if self.lambda_ < 0:
            raise bad("lambda", f"must be >= 0, got {self.lambda_}")
        for key in ("lr_mapper", "lr_generator", "adam_eps"):
            if getattr(self, key) <= 0:
                raise bad(key, f"must be > 0, got {getattr(self, key)}")
        for key in ("ema_decay", "adam_beta1", "adam_beta2"):
            v = getattr(self, key)
            if not (0.0 <= v < 1.0):
                raise bad(key, f"must be in [0, 1), got {v}")
        if self.clone_jitter < 0:
            raise bad("clone_jitter", f"must be >= 0, got {self.clone_jitter}")
        if self.prompt_scheme not in PROMPT_SCHEMES:
            raise bad("prompt_scheme",
                      f"must be one of {', '.join(PROMPT_SCHEMES)}, got {self.prompt_scheme!r}")

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            out[_JSON_KEYS.get(f.name, f.name)] = getattr(self, f.name)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError(f"config must be a JSON object, got {type(data).__name__}")
        key_to_attr = {_JSON_KEYS.get(f.name, f.name): f.name for f in fields(cls)}
        kwargs = {}
        for key, value in data.items():
            if key not in key_to_attr:
                raise ConfigError(f"unknown config key {key!r}")
            attr = key_to_attr[key]
            if attr in _INT_FIELDS:
                if isinstance(value, bool) or not isinstance(value, int):
                    raise ConfigError(f"config key {key!r}: expected integer, got {value!r}")
                kwargs[attr] = value
            elif attr in _FLOAT_FIELDS:
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise ConfigError(f"config key {key!r}: expected number, got {value!r}")
                kwargs[attr] = float(value)
            else:  # prompt_scheme
                if not isinstance(value, str):
                    raise ConfigError(f"config key {key!r}: expected string, got {value!r}")
                kwargs[attr] = value
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg


def load_config(path) -> RunConfig:
    """Read a UTF-8 JSON config file. Unknown keys are rejected by name."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {p} is not valid JSON: {e}") from e
    return RunConfig.from_dict(data)


def save_config(cfg: RunConfig, path) -> None:
    """Write the full config (all fields explicit) as UTF-8 JSON."""
    Path(path).write_text(
        json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def config_hash(cfg: RunConfig) -> str:
    """sha256 over the canonical JSON form; stable across field order."""
    canon = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()
