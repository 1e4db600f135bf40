"""Image and text encoders mapping into one shared embedding space.

The training code only relies on the small protocol surface below, so a real
CLIP checkpoint can be plugged in through an adapter that satisfies it. The
bundled toy backend is a deterministic, differentiable stand-in sized for
desk-scale runs: a seeded linear map for images, and mean-pooling plus a
seeded square map with a tanh squash for token matrices. Encoders return raw
(unnormalized) embeddings; normalization happens inside the losses.
"""
from __future__ import annotations

import hashlib
import string
from importlib import resources
from typing import Mapping, Protocol, Sequence, runtime_checkable

import torch

from .core import DTYPE, DomainLabel, EmbeddingVector, PromptMatrix, seeded_rng
from .errors import DimensionMismatchError

# 64-word toy vocabulary. Fixed list; the vectors are drawn from the backend
# seed. nearest_word searches exactly these entries.
VOCABULARY_WORDS = (
    "a", "ant", "art", "bee", "bird", "blue", "boat", "book",
    "box", "bridge", "car", "cat", "chair", "city", "cloud", "cup",
    "dark", "deer", "dog", "door", "dress", "drum", "face", "fish",
    "flower", "forest", "fox", "frog", "glass", "gold", "grass", "green",
    "hat", "horse", "house", "ice", "king", "lake", "lamp", "leaf",
    "lion", "man", "moon", "mountain", "mouse", "night", "of", "owl",
    "paint", "photo", "queen", "red", "river", "road", "rock", "rose",
    "ship", "sky", "snow", "star", "stone", "sun", "tree", "wolf",
)


@runtime_checkable
class ImageEncoder(Protocol):
    """Maps images to k-dim embeddings; must be pure and differentiable."""

    k: int
    input_shape: tuple[int, ...]

    def encode(self, image: torch.Tensor) -> EmbeddingVector: ...


@runtime_checkable
class TextEncoder(Protocol):
    """Maps token-embedding rows to k-dim embeddings; pure, differentiable.

    ``encode_rows`` is the primitive: it pools a (..., r, k) stack of token
    rows into (..., k) embeddings. encode_matrix and encode_text are thin
    wrappers, so a string encodes identically to the matrix of its own token
    embeddings with no prompt rows attached.
    """

    k: int
    vocabulary: Mapping[str, torch.Tensor]

    def encode_rows(self, rows: torch.Tensor) -> EmbeddingVector: ...
    def encode_matrix(self, matrix: PromptMatrix) -> EmbeddingVector: ...
    def encode_text(self, text: str) -> EmbeddingVector: ...
    def embed_tokens(self, text: str) -> torch.Tensor: ...


def tokenize(text: str) -> list[str]:
    """Lowercase whitespace tokenizer; punctuation is stripped at token edges
    so template periods do not leak into lookups ("dog." -> "dog")."""
    words = []
    for raw in text.lower().split():
        word = raw.strip(string.punctuation)
        if word:
            words.append(word)
    if not words:
        raise ValueError(f"no tokens in text {text!r}")
    return words


def _hashed_unit_vector(word: str, k: int) -> torch.Tensor:
    # Out-of-vocabulary fallback: a unit vector seeded from the word itself,
    # so any label or template word embeds deterministically.
    digest = hashlib.blake2b(word.encode("utf-8"), digest_size=8).digest()
    seed = int.from_bytes(digest, "little") & 0x7FFF_FFFF_FFFF_FFFF
    v = torch.randn(k, generator=seeded_rng(seed), dtype=DTYPE)
    return v / v.norm()


class ToyImageEncoder:
    """Fixed seeded linear map from flat images to the embedding space.

    ``projection`` has shape (k, p); encode(e_i) is its i-th column and the
    all-zero image encodes to the zero vector (there is no bias).
    """

    def __init__(self, seed: int, input_dim: int, k: int):
        if input_dim < 1 or k < 1:
            raise DimensionMismatchError("input_dim and k must be >= 1")
        self.seed = seed
        self.k = k
        self.input_shape = (input_dim,)
        rng = seeded_rng(seed)
        scale = 1.0 / input_dim ** 0.5
        self.projection = torch.randn((k, input_dim), generator=rng, dtype=DTYPE) * scale

    def encode(self, image: torch.Tensor) -> EmbeddingVector:
        if image.shape[-1] != self.input_shape[0]:
            raise DimensionMismatchError(
                f"image has {image.shape[-1]} pixels, encoder expects {self.input_shape[0]}"
            )
        return image @ self.projection.T

    def parameters_dict(self) -> dict[str, torch.Tensor]:
        return {"projection": self.projection.detach().clone()}


def soft_rms_norm(x: torch.Tensor) -> torch.Tensor:
    """x / sqrt(1 + mean(x^2)) over the last axis.

    Near identity at unit scale, close to RMS normalization for large inputs,
    and smooth everywhere (no epsilon cliff at zero).
    """
    return x / torch.sqrt(1.0 + x.pow(2).mean(dim=-1, keepdim=True))


class ToyTextEncoder:
    """Per-row soft RMS normalization, mean-pooling, another soft RMS, then a
    seeded k x k map with a tanh squash.

    One seed determines the vocabulary vectors (drawn first, unit norm) and
    the pooling weight (drawn second), in that fixed order. The row
    normalization bounds every token row, so a growing prompt block can never
    drown out its label token: matrices differing in one label row stay apart
    in embedding space no matter how large training pushes the prompt rows.
    The second normalization keeps the tanh pre-activations in their
    responsive range.
    """

    def __init__(self, seed: int, k: int):
        if k < 1:
            raise DimensionMismatchError("k must be >= 1")
        self.seed = seed
        self.k = k
        rng = seeded_rng(seed)
        vocab_raw = torch.randn((len(VOCABULARY_WORDS), k), generator=rng, dtype=DTYPE)
        vocab_unit = vocab_raw / vocab_raw.norm(dim=1, keepdim=True)
        self.vocabulary: dict[str, torch.Tensor] = {
            word: vocab_unit[i] for i, word in enumerate(VOCABULARY_WORDS)
        }
        self.pool_weight = torch.randn((k, k), generator=rng, dtype=DTYPE) / k ** 0.5

    def embed_tokens(self, text: str) -> torch.Tensor:
        rows = []
        for word in tokenize(text):
            vec = self.vocabulary.get(word)
            if vec is None:
                vec = _hashed_unit_vector(word, self.k)
            rows.append(vec)
        return torch.stack(rows)

    def encode_rows(self, rows: torch.Tensor) -> EmbeddingVector:
        if rows.ndim < 2 or rows.shape[-2] < 1:
            raise DimensionMismatchError(
                f"token rows must be (..., r >= 1, k), got shape {tuple(rows.shape)}"
            )
        if rows.shape[-1] != self.k:
            raise DimensionMismatchError(
                f"token rows have width {rows.shape[-1]}, encoder expects {self.k}"
            )
        pooled = soft_rms_norm(soft_rms_norm(rows).mean(dim=-2))
        return torch.tanh(pooled @ self.pool_weight.T)

    def encode_matrix(self, matrix: PromptMatrix) -> EmbeddingVector:
        return self.encode_rows(matrix.rows())

    def encode_text(self, text: str) -> EmbeddingVector:
        return self.encode_rows(self.embed_tokens(text))

    def parameters_dict(self) -> dict[str, torch.Tensor]:
        out = {"pool_weight": self.pool_weight.detach().clone()}
        for word, vec in self.vocabulary.items():
            out[f"vocab.{word}"] = vec.detach().clone()
        return out


def encode_image(enc: ImageEncoder, image: torch.Tensor) -> EmbeddingVector:
    return enc.encode(image)


def encode_prompt_matrix(enc: TextEncoder, matrix: PromptMatrix) -> EmbeddingVector:
    return enc.encode_matrix(matrix)


def encode_label_averaged(
    enc: TextEncoder, label: DomainLabel, templates: Sequence[str]
) -> EmbeddingVector:
    """Average the encodings of the label slotted into every template.

    Templates are summed in sorted order, so the result is exactly invariant
    to the order of the input list.
    """
    if not templates:
        raise ValueError("template list must be non-empty")
    for t in templates:
        if t.count("{}") != 1:
            raise ValueError(f"template must contain exactly one {{}} slot: {t!r}")
    total = None
    for t in sorted(templates):
        emb = enc.encode_text(t.replace("{}", label.text))
        total = emb if total is None else total + emb
    return total / len(templates)


def nearest_word(enc: TextEncoder, v: torch.Tensor) -> tuple[str, float]:
    """Closest vocabulary entry to ``v`` by Euclidean distance.

    Ties break lexicographically (scan in sorted word order, strict improve).
    """
    if not enc.vocabulary:
        raise ValueError("encoder vocabulary is empty")
    if v.ndim != 1 or v.shape[0] != enc.k:
        raise DimensionMismatchError(
            f"query vector must have shape ({enc.k},), got {tuple(v.shape)}"
        )
    best_word, best_dist = None, None
    for word in sorted(enc.vocabulary):
        dist = float(torch.linalg.vector_norm(enc.vocabulary[word] - v))
        if best_dist is None or dist < best_dist:
            best_word, best_dist = word, dist
    return best_word, best_dist


def default_templates() -> list[str]:
    """The bundled 79-entry prompt template set, one template per line."""
    text = resources.files("ipl.data").joinpath("templates.txt").read_text(encoding="utf-8")
    return [line.strip() for line in text.splitlines() if line.strip()]
