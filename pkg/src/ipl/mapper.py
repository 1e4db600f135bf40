"""Latent mapper producing image-specific prompt vectors, plus prompt schemes.

The mapper is a four-layer fully-connected network with leaky rectifier
activations (slope 0.2) between layers and none on the output. At init its
final-layer bias holds the word embeddings of "a photo of a", hidden biases
are zero, and the remaining weights are small, so F(0) starts exactly at the
manual prompt and training perturbs it per image.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .core import DTYPE, DomainLabel, LatentBatch, LatentCode, PromptMatrix, RunConfig
from .encoders import TextEncoder
from .errors import DimensionMismatchError

MANUAL_PROMPT_TEXT = "a photo of a"

LEAKY_SLOPE = 0.2
# Small enough that F(0) dominates early prompts, large enough that prompts
# vary per image from the first iterations; picked by sweeping stage-1
# convergence margins on the toy backend over 5 seeds.
INIT_WEIGHT_SCALE = 0.3


class LatentMapper(nn.Module):
    """w (d,) -> prompt block (m, k); batched input maps to (n, m, k)."""

    def __init__(self, latent_dim: int, m: int, k: int, hidden_dim: int | None = None):
        super().__init__()
        if latent_dim < 1 or m < 1 or k < 1:
            raise DimensionMismatchError("latent_dim, m, and k must all be >= 1")
        self.latent_dim = latent_dim
        self.m = m
        self.k = k
        # 4x width gives the bottleneck enough capacity to separate a batch
        # of images at toy scale without changing the four-layer shape.
        self.hidden_dim = hidden_dim if hidden_dim is not None else 4 * latent_dim
        h = self.hidden_dim
        self.layers = nn.ModuleList([
            nn.Linear(latent_dim, h, dtype=DTYPE),
            nn.Linear(h, h, dtype=DTYPE),
            nn.Linear(h, h, dtype=DTYPE),
            nn.Linear(h, m * k, dtype=DTYPE),
        ])
        self.act = nn.LeakyReLU(LEAKY_SLOPE)

    def forward(self, w: torch.Tensor) -> torch.Tensor:
        if w.shape[-1] != self.latent_dim:
            raise DimensionMismatchError(
                f"latent width {w.shape[-1]} does not match mapper input {self.latent_dim}"
            )
        x = w
        for layer in self.layers[:-1]:
            x = self.act(layer(x))
        x = self.layers[-1](x)
        return x.reshape(*w.shape[:-1], self.m, self.k)


def _prompt_init_rows(enc: TextEncoder, m: int) -> torch.Tensor:
    """First min(m, 4) rows come from the manual prompt's tokens; any extra
    rows are zero."""
    tokens = enc.embed_tokens(MANUAL_PROMPT_TEXT)
    rows = torch.zeros((m, enc.k), dtype=DTYPE)
    take = min(m, tokens.shape[0])
    rows[:take] = tokens[:take]
    return rows


def _seeded_fill(t: torch.Tensor, rng: torch.Generator, scale: float) -> None:
    with torch.no_grad():
        t.copy_(torch.randn(t.shape, generator=rng, dtype=DTYPE) * scale)


def init_mapper(cfg: RunConfig, enc: TextEncoder, rng: torch.Generator) -> LatentMapper:
    """Training init: small seeded weights, zero hidden biases, final bias at
    the manual-prompt embeddings, so F(0) equals those rows exactly."""
    if cfg.clip_dim != enc.k:
        raise DimensionMismatchError(
            f"config clip_dim {cfg.clip_dim} does not match encoder width {enc.k}"
        )
    mapper = LatentMapper(cfg.latent_dim, cfg.m, enc.k)
    for layer in mapper.layers:
        _seeded_fill(layer.weight, rng, INIT_WEIGHT_SCALE)
        with torch.no_grad():
            layer.bias.zero_()
    with torch.no_grad():
        mapper.layers[-1].bias.copy_(_prompt_init_rows(enc, cfg.m).reshape(-1))
    return mapper


def random_mapper(cfg: RunConfig, enc: TextEncoder, rng: torch.Generator) -> LatentMapper:
    """Plain fan-in-scaled random init; the untrained baseline scheme."""
    if cfg.clip_dim != enc.k:
        raise DimensionMismatchError(
            f"config clip_dim {cfg.clip_dim} does not match encoder width {enc.k}"
        )
    mapper = LatentMapper(cfg.latent_dim, cfg.m, enc.k)
    for layer in mapper.layers:
        _seeded_fill(layer.weight, rng, 1.0 / layer.weight.shape[1] ** 0.5)
        with torch.no_grad():
            layer.bias.zero_()
    return mapper


def map_latent(mapper: LatentMapper, w: LatentCode) -> torch.Tensor:
    return mapper(w.values)


def map_latent_batch(mapper: LatentMapper, batch: LatentBatch) -> torch.Tensor:
    return mapper(batch.tensor)


def build_prompt_matrix(
    vectors: torch.Tensor, label: DomainLabel, enc: TextEncoder
) -> PromptMatrix:
    """Stack a prompt block on the label's token embeddings. The same block
    is reused for source and target matrices; only the label rows differ."""
    if vectors.ndim != 2:
        raise DimensionMismatchError(
            f"prompt block must be 2-D (m, k), got shape {tuple(vectors.shape)}"
        )
    if vectors.shape[1] != enc.k:
        raise DimensionMismatchError(
            f"prompt width {vectors.shape[1]} does not match encoder width {enc.k}"
        )
    return PromptMatrix(prompt_vectors=vectors, label_tokens=enc.embed_tokens(label.text))


class SharedPromptMatrix(nn.Module):
    """One trainable (m, k) block shared by every image; the learned_fixed
    scheme optimizes this with the same stage-1 losses as the mapper."""

    def __init__(self, init_rows: torch.Tensor):
        super().__init__()
        if init_rows.ndim != 2:
            raise DimensionMismatchError("shared prompt block must be 2-D (m, k)")
        self.m, self.k = init_rows.shape
        self.block = nn.Parameter(init_rows.detach().clone().to(DTYPE))

    def forward(self, w: torch.Tensor) -> torch.Tensor:
        # Ignores w by construction; expands to match the batch shape.
        return self.block.unsqueeze(0).expand(w.shape[0], -1, -1)


def shared_prompt_matrix(cfg: RunConfig, enc: TextEncoder) -> SharedPromptMatrix:
    """learned_fixed starting point, same init rows as the mapper bias."""
    if cfg.clip_dim != enc.k:
        raise DimensionMismatchError(
            f"config clip_dim {cfg.clip_dim} does not match encoder width {enc.k}"
        )
    return SharedPromptMatrix(_prompt_init_rows(enc, cfg.m))


@dataclass
class PromptScheme:
    """How stage 2 obtains the prompt block for each latent.

    kind          payload
    manual_fixed  token_block: embeddings of a fixed prompt text
    learned_fixed shared: a trained SharedPromptMatrix
    random        mapper: an untrained random_mapper
    adaptive      mapper: a stage-1-trained LatentMapper
    """

    kind: str
    token_block: torch.Tensor | None = None
    shared: SharedPromptMatrix | None = None
    mapper: LatentMapper | None = None

    def __post_init__(self):
        if self.kind == "manual_fixed" and self.token_block is None:
            raise ValueError("manual_fixed scheme requires a token block")
        if self.kind == "learned_fixed" and self.shared is None:
            raise ValueError("learned_fixed scheme requires a trained shared block")
        if self.kind in ("random", "adaptive") and self.mapper is None:
            raise ValueError(f"{self.kind} scheme requires a mapper")
        if self.kind not in ("manual_fixed", "learned_fixed", "random", "adaptive"):
            raise ValueError(f"unknown prompt scheme {self.kind!r}")


def manual_fixed_scheme(enc: TextEncoder, text: str = MANUAL_PROMPT_TEXT) -> PromptScheme:
    return PromptScheme(kind="manual_fixed", token_block=enc.embed_tokens(text))


def learned_fixed_scheme(shared: SharedPromptMatrix) -> PromptScheme:
    return PromptScheme(kind="learned_fixed", shared=shared)


def random_scheme(cfg: RunConfig, enc: TextEncoder, rng: torch.Generator) -> PromptScheme:
    return PromptScheme(kind="random", mapper=random_mapper(cfg, enc, rng))


def adaptive_scheme(mapper: LatentMapper) -> PromptScheme:
    return PromptScheme(kind="adaptive", mapper=mapper)


def scheme_prompts(scheme: PromptScheme, w: LatentCode) -> torch.Tensor:
    """Prompt block (m, k) for one latent under the given scheme."""
    return scheme_prompts_batch(scheme, w.values.unsqueeze(0))[0]


def scheme_prompts_batch(scheme: PromptScheme, w_batch: torch.Tensor) -> torch.Tensor:
    """Prompt blocks (n, m, k) for a latent batch. Fixed schemes expand one
    block, so their rows are bitwise identical across the batch."""
    n = w_batch.shape[0]
    if scheme.kind == "manual_fixed":
        return scheme.token_block.unsqueeze(0).expand(n, -1, -1)
    if scheme.kind == "learned_fixed":
        return scheme.shared(w_batch)
    return scheme.mapper(w_batch)
