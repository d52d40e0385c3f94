"""Synthetic concealed-object scenes: a textured background with a similarly
textured, slightly brighter blob.  Used by the tests and the demo scripts."""

from __future__ import annotations

import numpy as np
from scipy import ndimage


def _texture(rng: np.random.Generator, shape, scale: float) -> np.ndarray:
    noise = rng.standard_normal(shape)
    tex = ndimage.gaussian_filter(noise, sigma=scale, mode="wrap")
    tex -= tex.mean()
    return tex / (tex.std() + 1e-12)


def make_toy_sample(seed: int, size: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(clean_rgb, gt_mask)`` for one scene."""
    rng = np.random.default_rng(seed)
    h = w = size
    hue = rng.uniform(0.6, 1.0, size=3)

    bg_level = rng.uniform(0.35, 0.5)
    fg_level = bg_level + rng.uniform(0.2, 0.3)
    bg = bg_level + 0.06 * _texture(rng, (h, w), 1.5)
    fg = fg_level + 0.06 * _texture(rng, (h, w), 1.5)

    rows, cols = np.mgrid[0:h, 0:w]
    cy, cx = rng.uniform(0.35, 0.65, size=2) * size
    ry, rx = rng.uniform(0.15, 0.28, size=2) * size
    theta = rng.uniform(0, np.pi)
    dy, dx = rows - cy, cols - cx
    u = dx * np.cos(theta) + dy * np.sin(theta)
    v = -dx * np.sin(theta) + dy * np.cos(theta)
    mask = ((u / rx) ** 2 + (v / ry) ** 2 <= 1.0).astype(np.float64)

    gray = np.where(mask > 0, fg, bg)
    clean = np.clip(gray[:, :, None] * hue[None, None, :] / hue.max(), 0.0, 1.0)
    return clean, mask


def make_toy_set(n: int = 20, size: int = 64, seed: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    return [make_toy_sample(seed * 1000 + i, size) for i in range(n)]


def write_toy_dataset(out_dir, n: int = 20, size: int = 64, seed: int = 0):
    """Write clean PNGs, mask PNGs and a ``manifest.csv``; returns the manifest path."""
    from pathlib import Path

    from . import io

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, (clean, mask) in enumerate(make_toy_set(n, size, seed)):
        ident = f"toy{i:03d}"
        img_path, mask_path = out_dir / f"{ident}.png", out_dir / f"{ident}_gt.png"
        io.write_image(img_path, clean)
        io.write_mask(mask_path, mask)
        entries.append(io.ManifestEntry(ident, img_path, mask_path))
    path = out_dir / "manifest.csv"
    io.write_manifest(path, entries)
    return path
