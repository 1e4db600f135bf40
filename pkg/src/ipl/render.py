"""PNG rendering for toy images: heat-mapped square grids via Pillow.

Rendering is deterministic (no timestamps or environment data end up in the
bytes), so re-running a seeded command reproduces identical files.
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import torch
from matplotlib import colormaps
from PIL import Image

from .errors import DimensionMismatchError

_CMAP = colormaps["viridis"]
_TILE_GAP = 2
_UPSCALE = 24


def to_square(vec: torch.Tensor) -> np.ndarray:
    """Reshape a flat toy image to its square grid."""
    v = np.asarray(vec.detach().cpu(), dtype=np.float64).reshape(-1)
    side = math.isqrt(v.size)
    if side * side != v.size:
        raise DimensionMismatchError(
            f"image with {v.size} values is not a square grid"
        )
    return v.reshape(side, side)


def _colorize(img: np.ndarray) -> np.ndarray:
    lo, hi = float(img.min()), float(img.max())
    if hi - lo < 1e-12:
        norm = np.full_like(img, 0.5)
    else:
        norm = (img - lo) / (hi - lo)
    rgba = _CMAP(norm)
    return (rgba[..., :3] * 255.0).round().astype(np.uint8)


def render_image(vec: torch.Tensor, upscale: int = _UPSCALE) -> Image.Image:
    rgb = _colorize(to_square(vec))
    img = Image.fromarray(rgb, mode="RGB")
    if upscale > 1:
        img = img.resize((img.width * upscale, img.height * upscale), Image.NEAREST)
    return img


def save_image_png(path, vec: torch.Tensor) -> Path:
    p = Path(path)
    render_image(vec).save(p, format="PNG")
    return p


def save_montage_png(path, vecs, cols: int | None = None) -> Path:
    """Tile several rendered images into one PNG, row-major."""
    if not len(vecs):
        raise ValueError("montage needs at least one image")
    tiles = [render_image(v) for v in vecs]
    w, h = tiles[0].size
    cols = cols if cols is not None else len(tiles)
    rows = math.ceil(len(tiles) / cols)
    canvas = Image.new(
        "RGB",
        (cols * w + (cols - 1) * _TILE_GAP, rows * h + (rows - 1) * _TILE_GAP),
        color=(255, 255, 255),
    )
    for i, tile in enumerate(tiles):
        r, c = divmod(i, cols)
        canvas.paste(tile, (c * (w + _TILE_GAP), r * (h + _TILE_GAP)))
    p = Path(path)
    canvas.save(p, format="PNG")
    return p
