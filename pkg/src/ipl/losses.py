"""Training objectives for both stages.

Stage 1: a contrastive term over the image/text similarity matrix plus a
domain regularizer pulling target prompt matrices toward the target label's
(template-averaged) embedding. Stage 2: an adaptive directional term aligning
per-image embedding shifts with per-image text shifts. Batch terms are
literal sums over the batch, with no 1/n factor; the lambda defaults assume
the reference batch size of 32, so traces are comparable at that size.
"""
from __future__ import annotations

from typing import NamedTuple, Sequence

import torch

from .core import PromptMatrix
from .encoders import TextEncoder
from .errors import DegenerateVectorError, DimensionMismatchError

EPS_DEGENERATE = 1e-8


def normalize(v: torch.Tensor, eps: float = EPS_DEGENERATE) -> torch.Tensor:
    """L2-normalize along the last axis; norms <= eps are an error."""
    norms = torch.linalg.vector_norm(v, dim=-1, keepdim=True)
    if bool((norms <= eps).any()):
        raise DegenerateVectorError(
            f"cannot normalize vector with norm <= {eps}"
        )
    return v / norms


def similarity_matrix(image_embs: torch.Tensor, text_embs: torch.Tensor) -> torch.Tensor:
    """Pairwise cosine: S[i, j] = cos(image i, text j), both sides (n, k).

    Rows are normalized here, so a cosine is just a dot product afterwards.
    """
    if image_embs.ndim != 2 or text_embs.ndim != 2:
        raise DimensionMismatchError("similarity_matrix expects 2-D (n, k) inputs")
    if image_embs.shape != text_embs.shape:
        raise DimensionMismatchError(
            f"image side {tuple(image_embs.shape)} != text side {tuple(text_embs.shape)}"
        )
    for side, embs in (("image", image_embs), ("text", text_embs)):
        norms = torch.linalg.vector_norm(embs, dim=-1)
        bad = (norms <= EPS_DEGENERATE).nonzero()
        if bad.numel():
            raise DegenerateVectorError(
                f"degenerate {side} embedding at row {int(bad[0])}"
            )
    return normalize(image_embs) @ normalize(text_embs).T


def contrastive_loss(sim: torch.Tensor) -> torch.Tensor:
    """Sum of off-diagonal similarities minus the sum of diagonal ones.

    Minimized at -n^2 for entries confined to [-1, 1] (diagonal +1,
    off-diagonal -1).
    """
    if sim.ndim != 2 or sim.shape[0] != sim.shape[1]:
        raise DimensionMismatchError(
            f"similarity matrix must be square, got {tuple(sim.shape)}"
        )
    diag = sim.diagonal().sum()
    off = sim.sum() - diag
    return off - diag


def domain_regularization_from_embeddings(
    matrix_embs: torch.Tensor, label_emb: torch.Tensor
) -> torch.Tensor:
    """-sum_i cos(matrix embedding i, label embedding)."""
    if matrix_embs.ndim != 2:
        raise DimensionMismatchError("matrix embeddings must be 2-D (n, k)")
    if label_emb.ndim != 1 or label_emb.shape[0] != matrix_embs.shape[1]:
        raise DimensionMismatchError(
            f"label embedding shape {tuple(label_emb.shape)} does not match width"
            f" {matrix_embs.shape[1]}"
        )
    return -(normalize(matrix_embs) @ normalize(label_emb)).sum()


def domain_regularization_loss(
    target_matrices: Sequence[PromptMatrix],
    enc: TextEncoder,
    label_emb: torch.Tensor,
) -> torch.Tensor:
    """Pull every encoded target matrix toward the target label embedding."""
    if not len(target_matrices):
        raise ValueError("need at least one target prompt matrix")
    embs = torch.stack([enc.encode_matrix(mat) for mat in target_matrices])
    return domain_regularization_from_embeddings(embs, label_emb)


def mapper_loss(
    sim: torch.Tensor,
    target_matrices: Sequence[PromptMatrix],
    enc: TextEncoder,
    label_emb: torch.Tensor,
    lam: float,
) -> torch.Tensor:
    """Full stage-1 objective: contrastive + lambda * domain regularizer."""
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    return contrastive_loss(sim) + lam * domain_regularization_loss(
        target_matrices, enc, label_emb
    )


def image_direction(src_emb: torch.Tensor, tgt_emb: torch.Tensor) -> torch.Tensor:
    """Difference of normalized image embeddings; broadcast over leading dims."""
    if src_emb.shape != tgt_emb.shape:
        raise DimensionMismatchError(
            f"source {tuple(src_emb.shape)} != target {tuple(tgt_emb.shape)}"
        )
    return normalize(tgt_emb) - normalize(src_emb)


def text_direction(src_emb: torch.Tensor, tgt_emb: torch.Tensor) -> torch.Tensor:
    """Difference of normalized text-matrix embeddings; same form as the
    image direction, kept separate because the inputs come from different
    encoders."""
    if src_emb.shape != tgt_emb.shape:
        raise DimensionMismatchError(
            f"source {tuple(src_emb.shape)} != target {tuple(tgt_emb.shape)}"
        )
    return normalize(tgt_emb) - normalize(src_emb)


class DirectionalLoss(NamedTuple):
    loss: torch.Tensor
    skipped: int


def adaptive_directional_loss(
    delta_i: torch.Tensor,
    delta_t: torch.Tensor,
    eps: float = EPS_DEGENERATE,
) -> DirectionalLoss:
    """sum_i (1 - cos(delta_i[i], delta_t[i])) over an (n, k) pair stack.

    Image directions with norm <= eps contribute the constant 1 and carry no
    gradient; their count is returned as the skip statistic. A degenerate
    text direction means the prompt/label setup is broken and is an error.
    """
    if delta_i.ndim != 2 or delta_t.ndim != 2 or delta_i.shape != delta_t.shape:
        raise DimensionMismatchError(
            f"direction stacks must share an (n, k) shape, got"
            f" {tuple(delta_i.shape)} and {tuple(delta_t.shape)}"
        )
    t_norms = torch.linalg.vector_norm(delta_t, dim=-1)
    bad = (t_norms <= eps).nonzero()
    if bad.numel():
        raise DegenerateVectorError(
            f"degenerate text direction at row {int(bad[0])}"
        )
    i_norms = torch.linalg.vector_norm(delta_i, dim=-1)
    active = i_norms > eps
    skipped = int((~active).sum())
    if bool(active.any()):
        di = delta_i[active]
        dt = delta_t[active]
        cos = (di * dt).sum(dim=-1) / (
            torch.linalg.vector_norm(di, dim=-1) * torch.linalg.vector_norm(dt, dim=-1)
        )
        loss = (1.0 - cos).sum() + float(skipped)
    else:
        loss = torch.tensor(float(skipped), dtype=delta_i.dtype)
    return DirectionalLoss(loss=loss, skipped=skipped)
