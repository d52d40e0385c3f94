"""Small image operators shared by the restoration, segmentation and scoring code."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

_LUMA = np.array([0.299, 0.587, 0.114])


def luminance(x: np.ndarray) -> np.ndarray:
    if x.shape[2] == 3:
        return x @ _LUMA
    return x.mean(axis=2)


def dark_channel(x: np.ndarray, window: int = 7) -> np.ndarray:
    # replicate padding at the borders
    return ndimage.minimum_filter(x.min(axis=2), size=window, mode="nearest")


def laplacian_variance(x: np.ndarray) -> float:
    lap = ndimage.laplace(luminance(x), mode="nearest")
    return float(lap.var())


def box_mean(a: np.ndarray, radius: int) -> np.ndarray:
    if radius <= 0:
        return a.copy()
    return ndimage.uniform_filter(a, size=2 * radius + 1, mode="nearest")


def gaussian_smooth(x: np.ndarray, sigma: float) -> np.ndarray:
    if sigma <= 0:
        return x.copy()
    if x.ndim == 3:
        sig = (sigma, sigma, 0)
    else:
        sig = sigma
    return ndimage.gaussian_filter(x, sigma=sig, mode="nearest")


def guided_filter(guide: np.ndarray, src: np.ndarray, radius: int, eps: float) -> np.ndarray:
    """Gray-guide guided filter (He et al.) on 2-D arrays."""
    mean_i = box_mean(guide, radius)
    mean_p = box_mean(src, radius)
    cov_ip = box_mean(guide * src, radius) - mean_i * mean_p
    var_i = box_mean(guide * guide, radius) - mean_i * mean_i
    a = cov_ip / (var_i + eps)
    b = mean_p - a * mean_i
    return box_mean(a, radius) * guide + box_mean(b, radius)


def grad2d(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Forward differences with a zero last row/column (Neumann boundary)."""
    gx = np.zeros_like(u)
    gy = np.zeros_like(u)
    gx[:-1] = u[1:] - u[:-1]
    gy[:, :-1] = u[:, 1:] - u[:, :-1]
    return gx, gy


def grad2d_adjoint(px: np.ndarray, py: np.ndarray) -> np.ndarray:
    """Exact transpose of :func:`grad2d` (minus the usual divergence)."""
    out = np.zeros_like(px)
    out[:-1] -= px[:-1]
    out[1:] += px[:-1]
    out[:, :-1] -= py[:, :-1]
    out[:, 1:] += py[:, :-1]
    return out


def total_variation(x: np.ndarray) -> float:
    """Isotropic TV summed over channels."""
    gx, gy = grad2d(np.asarray(x, dtype=np.float64))
    return float(np.sum(np.sqrt(gx * gx + gy * gy)))


def tv_prox(g: np.ndarray, weight, n_iter: int = 20) -> np.ndarray:
    """Approximate prox of the isotropic TV by projected gradient on the dual.

    Solves ``min_u 0.5*||u - g||^2 + sum_i weight_i * |grad u|_i`` per channel
    with a fixed number of iterations.  ``weight`` may be a scalar or an
    (H, W) map, which gives spatially varying smoothing.
    """
    g = np.asarray(g, dtype=np.float64)
    squeeze = g.ndim == 2
    if squeeze:
        g = g[:, :, None]
    lam = np.broadcast_to(np.asarray(weight, dtype=np.float64), g.shape[:2])[:, :, None]
    tau = 0.125  # 1 / ||grad||^2 upper bound
    px = np.zeros_like(g)
    py = np.zeros_like(g)
    u = g
    for _ in range(n_iter):
        gx, gy = grad2d(u)
        px = px + tau * gx
        py = py + tau * gy
        norm = np.sqrt(px * px + py * py)
        scale = np.where(norm > lam, lam / np.maximum(norm, 1e-300), 1.0)
        px *= scale
        py *= scale
        u = g - grad2d_adjoint(px, py)
    return u[:, :, 0] if squeeze else u
