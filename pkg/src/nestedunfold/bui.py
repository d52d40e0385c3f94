"""Quality-driven selection between inner iterates and the cross-stage consistency term."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import filters
from .core import as_mask, as_raster, check_same_grid
from .metrics import weighted_bce, weighted_iou_loss

DEFAULT_RANGES = {
    "sharpness": (0.0, 0.05),
    "contrast": (0.0, 0.5),
    "exposure": (0.0, 1.0),
    "clarity": (0.0, 1.0),
}


@dataclass(frozen=True)
class QualityScore:
    sharpness: float
    contrast: float
    exposure: float
    clarity: float
    composite: float


def _normalise(value: float, lo_hi) -> float:
    lo, hi = lo_hi
    return float(np.clip((value - lo) / (hi - lo), 0.0, 1.0))


def score(x, weights: Sequence[float] = (1, 1, 1, 1), ranges: Optional[dict] = None, window: int = 7) -> QualityScore:
    """No-reference quality of a raster.

    Components are the Laplacian variance, RMS luminance contrast, an exposure
    term ``1 - 2*|mean - 0.5|`` and a haze-free term ``1 - mean(dark channel)``.
    Each is min-max normalised against ``ranges`` (clipped to [0, 1]) and the
    composite is their weighted sum.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (4,) or np.any(w < 0) or not np.any(w > 0):
        raise ValueError("weights must be 4 nonnegative values, not all zero")
    ranges = {**DEFAULT_RANGES, **(ranges or {})}
    x = as_raster(x, "x")
    lum = filters.luminance(x)
    comps = {
        "sharpness": filters.laplacian_variance(x),
        "contrast": float(lum.std()),
        "exposure": 1.0 - 2.0 * abs(float(lum.mean()) - 0.5),
        "clarity": 1.0 - float(filters.dark_channel(x, window).mean()),
    }
    normed = [_normalise(comps[k], ranges[k]) for k in ("sharpness", "contrast", "exposure", "clarity")]
    return QualityScore(**comps, composite=float(np.dot(w, normed)))


def ranges_from_config(cfg) -> dict:
    b = cfg.bui
    return {
        "sharpness": tuple(b.sharpness_range),
        "contrast": tuple(b.contrast_range),
        "exposure": tuple(b.exposure_range),
        "clarity": tuple(b.clarity_range),
    }


def rank_scores(scores: Sequence[float]) -> tuple[int, int]:
    """Indices of the highest and second-highest score; ties go to the lower index."""
    if len(scores) == 0:
        raise ValueError("cannot select from an empty list")
    order = np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")
    t1 = int(order[0])
    t2 = int(order[1]) if len(order) > 1 else t1
    return t1, t2


def select_t1_t2(iterates: Sequence, weights=(1, 1, 1, 1), ranges: Optional[dict] = None) -> tuple[int, int]:
    if len(iterates) == 0:
        raise ValueError("cannot select from an empty list")
    return rank_scores([score(x, weights, ranges).composite for x in iterates])


def csc_terms(m_t1, m_t2, weight_map=None, delta: float = 1e-7) -> tuple[float, float]:
    """(weighted BCE, weighted IoU loss) of ``m_t1`` against ``m_t2`` as target."""
    m_t1 = as_mask(m_t1, "m_t1")
    m_t2 = as_mask(m_t2, "m_t2")
    check_same_grid(m_t1, m_t2)
    return weighted_bce(m_t1, m_t2, weight_map, delta), weighted_iou_loss(m_t1, m_t2, weight_map)


def csc_divergence(m_t1, m_t2, weight_map=None, delta: float = 1e-7) -> float:
    bce, iou = csc_terms(m_t1, m_t2, weight_map, delta)
    return bce + iou
