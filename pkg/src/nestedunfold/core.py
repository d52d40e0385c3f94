"""Raster/mask conventions, elementwise algebra and per-stage state.

Rasters are float64 arrays of shape (H, W, C) with C in {1, 3}; masks are
float64 arrays of shape (H, W).  A mask multiplies every channel of a raster
identically.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def as_raster(a, name: str = "raster") -> np.ndarray:
    """Return ``a`` as a finite float64 (H, W, C) array; 2-D input gets C=1."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise ValueError(f"{name}: expected shape (H, W[, C]) with C in {{1, 3}}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: contains NaN or Inf")
    return arr


def as_mask(a, name: str = "mask") -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim != 2:
        raise ValueError(f"{name}: expected shape (H, W), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: contains NaN or Inf")
    return arr


def check_same_grid(*arrays: np.ndarray) -> None:
    shapes = [a.shape[:2] for a in arrays]
    if any(s != shapes[0] for s in shapes[1:]):
        raise ValueError(f"spatial dimension mismatch: {shapes}")


def check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def _broadcast_mask(a: np.ndarray) -> np.ndarray:
    return a[:, :, None] if a.ndim == 2 else a


def hadamard(a, b) -> np.ndarray:
    """Elementwise product; a 2-D mask (or 1-channel raster) broadcasts over channels."""
    a = np.asarray(a, dtype=np.float64)
    b = as_raster(b, "b")
    if a.ndim == 2:
        a = as_mask(a, "a")
    else:
        a = as_raster(a, "a")
    check_same_grid(a, b)
    a = _broadcast_mask(a)
    if a.shape[2] not in (1, b.shape[2]):
        raise ValueError(f"channel mismatch: {a.shape[2]} vs {b.shape[2]}")
    return a * b


def decompose_residual(x, m, b) -> np.ndarray:
    """X - X*M - B: what the foreground/background split fails to explain."""
    x = as_raster(x, "x")
    m = as_mask(m, "m")
    b = as_raster(b, "b")
    check_same_grid(x, m, b)
    check_same_shape(x, b)
    return x - x * m[:, :, None] - b


def fidelity_energy(x, m, b) -> float:
    r = decompose_residual(x, m, b)
    return 0.5 * float(np.sum(r * r))


def clamp01(a: np.ndarray) -> np.ndarray:
    return np.clip(a, 0.0, 1.0)


@dataclass
class StageState:
    """Everything produced by one outer stage.

    ``inner_iterates`` holds X_{k,1..N_k}; ``x_t1`` / ``x_t2`` are the best and
    second-best of them by quality score.  Stage 0 is the zero initialisation
    with ``x_t1 = x_t2 = Y``.
    """

    stage_index: int
    mask: np.ndarray
    background: np.ndarray
    inner_iterates: list[np.ndarray] = field(default_factory=list)
    quality_scores: list[float] = field(default_factory=list)
    t1_index: int = 0
    t2_index: int = 0
    x_t1: np.ndarray = None
    x_t2: np.ndarray = None

    @classmethod
    def initial(cls, y) -> "StageState":
        y = as_raster(y, "y")
        h, w, c = y.shape
        return cls(
            stage_index=0,
            mask=np.zeros((h, w)),
            background=np.zeros((h, w, c)),
            x_t1=y,
            x_t2=y,
        )

    @property
    def final_iterate(self) -> np.ndarray:
        """X_{k,N}: the last inner iterate (used by the restoration loss)."""
        return self.inner_iterates[-1] if self.inner_iterates else self.x_t1
