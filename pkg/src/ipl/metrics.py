"""Evaluation metrics and the toy extractor plugins that feed them.

Classifier and feature extractors are plugin slots: anything with the right
method shape works, and the seeded toy extractors here serve every test. All
metrics are pure functions of their inputs.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import torch

from .core import DTYPE, seeded_rng
from .errors import DegenerateVectorError, DimensionMismatchError

_PSD_TOL = 1e-8
_COV_RIDGE = 1e-6


def _as_f64(x) -> torch.Tensor:
    t = torch.as_tensor(x)
    return t.to(DTYPE)


def validate_class_probs(probs: torch.Tensor) -> torch.Tensor:
    probs = _as_f64(probs)
    if probs.ndim != 2 or probs.shape[0] < 1 or probs.shape[1] < 2:
        raise DimensionMismatchError(
            f"class probabilities must be (n >= 1, C >= 2), got {tuple(probs.shape)}"
        )
    if bool((probs < 0).any()):
        raise ValueError("class probabilities must be non-negative")
    sums = probs.sum(dim=1)
    if bool((sums - 1.0).abs().max() > 1e-6):
        raise ValueError("class probability rows must sum to 1 within 1e-6")
    return probs


def inception_score(probs: torch.Tensor) -> float:
    """exp(mean_i KL(p_i || mean_j p_j)); lands in [1, C] for valid rows."""
    probs = validate_class_probs(probs)
    marginal = probs.mean(dim=0)
    mask = probs > 0
    # 0 * log 0 = 0; the marginal is positive wherever any row is.
    logs = torch.zeros_like(probs)
    logs[mask] = torch.log(probs[mask]) - torch.log(marginal.expand_as(probs)[mask])
    kl_rows = (probs * logs).sum(dim=1)
    return float(torch.exp(kl_rows.mean()))


@dataclass(frozen=True)
class FeatureStats:
    """Mean and covariance of a feature sample set."""

    mean: torch.Tensor
    cov: torch.Tensor

    def __post_init__(self):
        if self.mean.ndim != 1:
            raise DimensionMismatchError("feature mean must be 1-D")
        f = self.mean.shape[0]
        if self.cov.shape != (f, f):
            raise DimensionMismatchError(
                f"covariance must be ({f}, {f}), got {tuple(self.cov.shape)}"
            )
        if bool((self.cov - self.cov.T).abs().max() > _PSD_TOL):
            raise ValueError("covariance must be symmetric")
        eigvals = torch.linalg.eigvalsh((self.cov + self.cov.T) / 2)
        if bool(eigvals.min() < -_PSD_TOL):
            raise ValueError(
                f"covariance is not positive semi-definite (min eigenvalue {float(eigvals.min()):.3e})"
            )


def feature_stats(samples: torch.Tensor, ddof: int = 1) -> FeatureStats:
    samples = _as_f64(samples)
    if samples.ndim != 2 or samples.shape[0] < 2:
        raise DimensionMismatchError(
            f"need a 2-D (L >= 2, f) sample matrix, got {tuple(samples.shape)}"
        )
    mean = samples.mean(dim=0)
    centered = samples - mean
    cov = centered.T @ centered / (samples.shape[0] - ddof)
    return FeatureStats(mean=mean, cov=(cov + cov.T) / 2)


def _sqrtm_psd(mat: torch.Tensor) -> torch.Tensor:
    # Symmetric square root through the eigendecomposition; tiny negative
    # eigenvalues from roundoff clamp to zero.
    sym = (mat + mat.T) / 2
    eigvals, eigvecs = torch.linalg.eigh(sym)
    eigvals = eigvals.clamp(min=0.0)
    return eigvecs @ torch.diag(eigvals.sqrt()) @ eigvecs.T


def frechet_distance(a: FeatureStats, b: FeatureStats) -> float:
    """||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)).

    The cross term uses the symmetrized product sqrt(S_a) S_b sqrt(S_a).
    """
    if a.mean.shape != b.mean.shape:
        raise DimensionMismatchError(
            f"feature widths differ: {tuple(a.mean.shape)} vs {tuple(b.mean.shape)}"
        )
    diff = a.mean - b.mean
    root_a = _sqrtm_psd(a.cov)
    cross = _sqrtm_psd(root_a @ b.cov @ root_a)
    value = float(diff @ diff + a.cov.trace() + b.cov.trace() - 2.0 * cross.trace())
    if value < -_PSD_TOL:
        raise ValueError(f"Frechet distance came out negative beyond tolerance: {value:.3e}")
    return max(value, 0.0)


def _spatial_stats(feats: torch.Tensor, regularize: bool) -> FeatureStats:
    n_loc, f = feats.shape
    if n_loc >= f + 1:
        return feature_stats(feats, ddof=1)
    if not regularize:
        raise ValueError(
            f"{n_loc} spatial locations cannot support a {f}-dim covariance;"
            " pass regularize=True to add a ridge"
        )
    warnings.warn(
        f"covariance from {n_loc} locations for {f} features; adding {_COV_RIDGE} ridge",
        stacklevel=3,
    )
    mean = feats.mean(dim=0)
    centered = feats - mean
    cov = centered.T @ centered / n_loc
    cov = (cov + cov.T) / 2 + _COV_RIDGE * torch.eye(f, dtype=DTYPE)
    return FeatureStats(mean=mean, cov=cov)


def sifid(feats_a, feats_b, regularize: bool = True) -> float:
    """Per-image Frechet distance treating spatial locations as samples.

    Accepts (L, f) stacks or (H, W, f) maps, flattened over space.
    """
    a = _as_f64(feats_a)
    b = _as_f64(feats_b)
    if a.ndim == 3:
        a = a.reshape(-1, a.shape[-1])
    if b.ndim == 3:
        b = b.reshape(-1, b.shape[-1])
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionMismatchError("feature maps must be (L, f) or (H, W, f)")
    if a.shape[-1] != b.shape[-1]:
        raise DimensionMismatchError(
            f"feature widths differ: {a.shape[-1]} vs {b.shape[-1]}"
        )
    return frechet_distance(
        _spatial_stats(a, regularize), _spatial_stats(b, regularize)
    )


def identity_similarity(feat_a, feat_b) -> float:
    """Cosine similarity between two identity-feature vectors."""
    a = _as_f64(feat_a)
    b = _as_f64(feat_b)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionMismatchError(
            f"identity features must be matching 1-D vectors, got"
            f" {tuple(a.shape)} and {tuple(b.shape)}"
        )
    na = torch.linalg.vector_norm(a)
    nb = torch.linalg.vector_norm(b)
    if float(na) <= 1e-8 or float(nb) <= 1e-8:
        raise DegenerateVectorError("identity features must have nonzero norm")
    return float(a @ b / (na * nb))


# Fixed 3x3 difference operator (horizontal, with its transpose for the
# vertical direction). Kernels sum to zero, and reflect padding is used, so a
# constant offset cancels exactly everywhere including the border.
_EDGE_KX = torch.tensor(
    [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]], dtype=DTYPE
)


def edge_map(image) -> torch.Tensor:
    """Gradient-magnitude map of a 2-D image."""
    img = _as_f64(image)
    if img.ndim != 2 or img.shape[0] < 3 or img.shape[1] < 3:
        raise DimensionMismatchError(
            f"edge maps need a 2-D image at least 3x3, got {tuple(img.shape)}"
        )
    x = img.unsqueeze(0).unsqueeze(0)
    x = torch.nn.functional.pad(x, (1, 1, 1, 1), mode="reflect")
    gx = torch.nn.functional.conv2d(x, _EDGE_KX.reshape(1, 1, 3, 3))
    gy = torch.nn.functional.conv2d(x, _EDGE_KX.T.reshape(1, 1, 3, 3))
    return torch.sqrt(gx * gx + gy * gy).squeeze(0).squeeze(0)


def structural_consistency(image_a, image_b) -> float:
    """Cosine between the two images' flattened edge maps."""
    a = _as_f64(image_a)
    b = _as_f64(image_b)
    if a.shape != b.shape:
        raise DimensionMismatchError(
            f"images must share a shape, got {tuple(a.shape)} and {tuple(b.shape)}"
        )
    ea = edge_map(a).reshape(-1)
    eb = edge_map(b).reshape(-1)
    na = torch.linalg.vector_norm(ea)
    nb = torch.linalg.vector_norm(eb)
    if float(na) <= 1e-8 or float(nb) <= 1e-8:
        raise DegenerateVectorError(
            "degenerate edge map: image has no gradient structure"
        )
    return float(ea @ eb / (na * nb))


def embedding_diversity(embs: torch.Tensor) -> float:
    """Mean pairwise cosine distance; the mode-collapse diagnostic."""
    embs = _as_f64(embs)
    if embs.ndim != 2 or embs.shape[0] < 2:
        raise DimensionMismatchError(
            f"need at least two embeddings, got shape {tuple(embs.shape)}"
        )
    norms = torch.linalg.vector_norm(embs, dim=-1, keepdim=True)
    if bool((norms <= 1e-8).any()):
        raise DegenerateVectorError("degenerate embedding in diversity input")
    unit = embs / norms
    n = embs.shape[0]
    gram = unit @ unit.T
    return float((1.0 - gram).sum() / (n * (n - 1)))


class ToyClassifier:
    """Seeded linear head + softmax; rows are valid class probabilities."""

    def __init__(self, seed: int, input_dim: int, n_classes: int):
        if n_classes < 2:
            raise DimensionMismatchError("need at least 2 classes")
        self.input_dim = input_dim
        self.n_classes = n_classes
        self.weight = torch.randn(
            (n_classes, input_dim), generator=seeded_rng(seed), dtype=DTYPE
        ) / input_dim ** 0.5

    def probabilities(self, images: torch.Tensor) -> torch.Tensor:
        images = _as_f64(images)
        if images.ndim != 2 or images.shape[1] != self.input_dim:
            raise DimensionMismatchError(
                f"images must be (n, {self.input_dim}), got {tuple(images.shape)}"
            )
        return torch.softmax(images @ self.weight.T, dim=1)


class ToyFeatureExtractor:
    """Seeded linear features for identity and Frechet-style metrics."""

    def __init__(self, seed: int, input_dim: int, n_features: int):
        self.input_dim = input_dim
        self.n_features = n_features
        self.weight = torch.randn(
            (n_features, input_dim), generator=seeded_rng(seed), dtype=DTYPE
        ) / input_dim ** 0.5

    def features(self, images: torch.Tensor) -> torch.Tensor:
        images = _as_f64(images)
        if images.shape[-1] != self.input_dim:
            raise DimensionMismatchError(
                f"images must have width {self.input_dim}, got {images.shape[-1]}"
            )
        return images @ self.weight.T


def toy_spatial_features(image, seed: int, n_features: int) -> torch.Tensor:
    """(L, f) feature map from sliding 3x3 patches through a seeded map."""
    img = _as_f64(image)
    if img.ndim != 2 or img.shape[0] < 3 or img.shape[1] < 3:
        raise DimensionMismatchError(
            f"need a 2-D image at least 3x3, got {tuple(img.shape)}"
        )
    patches = img.unfold(0, 3, 1).unfold(1, 3, 1).reshape(-1, 9)
    weight = torch.randn((n_features, 9), generator=seeded_rng(seed), dtype=DTYPE) / 3.0
    return patches @ weight.T
