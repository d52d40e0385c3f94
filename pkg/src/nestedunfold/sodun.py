"""Outer segmentation unfolding: alternating mask and background updates.

Both gradient steps descend the shared fidelity ``0.5*||X - X*M - B||^2``
where X is the currently selected restoration.  The proximal steps are
classical: a guided-filter fusion of the mask with the background complement
and a (mask-weighted) smoother for the background.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import bui, filters
from .core import StageState, as_mask, as_raster, check_same_grid, check_same_shape, clamp01
from .derun import DegradationOp, run_inner_unfolding


@dataclass
class MaskProx:
    kind: str = "guided_fusion"
    fusion_weight: float = 0.95
    guide_radius: int = 4
    guide_eps: float = 1e-3
    complement_norm: float = 1.0
    sparsity: float = 0.06

    @classmethod
    def from_config(cls, cfg) -> "MaskProx":
        s = getattr(cfg, "sodun", cfg)
        rho = s.fusion_weight if s.background_feedback else 1.0
        return cls(s.mask_prox, rho, s.guide_radius, s.guide_eps, s.complement_norm, s.mask_sparsity)


@dataclass
class BackgroundProx:
    kind: str = "gaussian_smooth"
    tv_weight: float = 0.05
    fg_boost: float = 2.0
    sigma: float = 16.0
    tv_iters: int = 20

    @classmethod
    def from_config(cls, cfg) -> "BackgroundProx":
        s = getattr(cfg, "sodun", cfg)
        return cls(s.background_prox, s.background_tv_weight, s.background_fg_boost, s.background_sigma, s.tv_iters)


def safe_alpha_m(x: np.ndarray) -> float:
    peak = float(np.max(x * x))
    return 0.9 / peak if peak > 0 else 0.9


def resolve_alphas(cfg, x: np.ndarray) -> tuple[float, float]:
    s = cfg.sodun
    alpha_m = safe_alpha_m(x) if s.alpha_m == "auto" else float(s.alpha_m)
    alpha_b = 0.9 if s.alpha_b == "auto" else float(s.alpha_b)
    return alpha_m, alpha_b


def mask_gradient(m, b, x) -> np.ndarray:
    """Channel-mean of X*(X*M + B - X), the mask-plane gradient direction."""
    return np.mean(x * (x * m[:, :, None] + b - x), axis=2)


def gradient_step_m(m_prev, b_prev, x_guide, alpha_m: float) -> np.ndarray:
    m_prev = as_mask(m_prev, "m_prev")
    b_prev = as_raster(b_prev, "b_prev")
    x = as_raster(x_guide, "x_guide")
    check_same_grid(m_prev, b_prev, x)
    check_same_shape(b_prev, x)
    return m_prev - alpha_m * mask_gradient(m_prev, b_prev, x)


def proximal_step_m(m_hat, b_prev, x_t1, y, prox: MaskProx) -> np.ndarray:
    m_hat = as_mask(m_hat, "m_hat")
    b_prev = as_raster(b_prev, "b_prev")
    x_t1 = as_raster(x_t1, "x_t1")
    y = as_raster(y, "y")
    check_same_grid(m_hat, b_prev, x_t1, y)
    if prox.kind == "clamp_only":
        return clamp01(m_hat)
    if prox.kind != "guided_fusion":
        raise ValueError(f"unknown mask prox {prox.kind!r}")
    rho = prox.fusion_weight
    complement = np.mean(1.0 - b_prev / prox.complement_norm, axis=2)
    # clamp(m - lambda) is the prox of lambda*||M||_1 restricted to [0, 1]
    fused = rho * clamp01(m_hat - prox.sparsity) + (1.0 - rho) * complement
    guide = np.concatenate([x_t1, y], axis=2).mean(axis=2)
    return clamp01(filters.guided_filter(guide, fused, prox.guide_radius, prox.guide_eps))


def gradient_step_b(m_k, b_prev, x_t1, alpha_b: float) -> np.ndarray:
    """B_hat = B - alpha*(B + X*M - X); alpha = 1 lands on X*(1 - M)."""
    m_k = as_mask(m_k, "m_k")
    b_prev = as_raster(b_prev, "b_prev")
    x = as_raster(x_t1, "x_t1")
    check_same_grid(m_k, b_prev, x)
    check_same_shape(b_prev, x)
    return b_prev - alpha_b * (b_prev + x * m_k[:, :, None] - x)


def proximal_step_b(b_hat, m_k, x_t1, y, prox: BackgroundProx) -> np.ndarray:
    """Smooth the clamped background.

    ``x_t1`` and ``y`` are accepted for interface parity with a learned prox.
    For TV the weight grows with the mask, since foreground pixels carry no
    background evidence.
    """
    b_hat = as_raster(b_hat, "b_hat")
    m_k = as_mask(m_k, "m_k")
    check_same_grid(b_hat, m_k, as_raster(x_t1, "x_t1"), as_raster(y, "y"))
    b = clamp01(b_hat)
    if prox.kind == "identity":
        return b
    if prox.kind == "gaussian_smooth":
        return clamp01(filters.gaussian_smooth(b, prox.sigma))
    if prox.kind == "total_variation":
        weight = prox.tv_weight * (1.0 + prox.fg_boost * clamp01(m_k))
        return clamp01(filters.tv_prox(b, weight, prox.tv_iters))
    raise ValueError(f"unknown background prox {prox.kind!r}")


def mask_steps(state_prev: StageState, x_guide: np.ndarray, y: np.ndarray, cfg) -> np.ndarray:
    """Both mask updates of a stage, driven by ``x_guide``."""
    alpha_m, _ = resolve_alphas(cfg, x_guide)
    m_hat = gradient_step_m(state_prev.mask, state_prev.background, x_guide, alpha_m)
    return proximal_step_m(m_hat, state_prev.background, x_guide, y, MaskProx.from_config(cfg))


def run_outer_stage(state_prev: StageState, y, cfg, operator: Optional[DegradationOp] = None) -> StageState:
    """One full stage: mask step, background step, inner restoration, selection."""
    y = as_raster(y, "y")
    k = state_prev.stage_index + 1
    if k > cfg.core.K:
        raise ValueError(f"stage {k} exceeds K={cfg.core.K}")
    x = state_prev.x_t1
    _, alpha_b = resolve_alphas(cfg, x)

    m_k = mask_steps(state_prev, x, y, cfg)
    b_hat = gradient_step_b(m_k, state_prev.background, x, alpha_b)
    b_k = proximal_step_b(b_hat, m_k, x, y, BackgroundProx.from_config(cfg))

    if cfg.derun.enabled:
        n_k = int(cfg.core.n_schedule[k - 1])
        x_ref = y if cfg.derun.reference == "observation" else x
        iterates = run_inner_unfolding(x, x_ref, b_k, m_k, y, n_k, cfg, operator)
    else:
        iterates = [x]

    ranges = bui.ranges_from_config(cfg)
    scores = [bui.score(it, cfg.bui.weights, ranges, cfg.derun.dark_window).composite for it in iterates]
    if cfg.bui.enabled:
        t1, t2 = bui.rank_scores(scores)
    else:
        t1 = len(iterates) - 1
        t2 = max(t1 - 1, 0)
    return StageState(
        stage_index=k,
        mask=m_k,
        background=b_k,
        inner_iterates=iterates,
        quality_scores=scores,
        t1_index=t1,
        t2_index=t2,
        x_t1=iterates[t1],
        x_t2=iterates[t2],
    )
