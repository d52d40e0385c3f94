"""Segmentation/restoration metrics and the stage-weighted training-style losses."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import as_mask, as_raster, check_same_grid, check_same_shape
from .filters import box_mean

CSV_METRICS = ("mae", "f_beta", "m_iou", "m_dice", "psnr", "wbce", "wiou", "l_basic", "l_csc", "l_total")


def _pair(pred, target):
    pred = as_mask(pred, "pred")
    target = as_mask(target, "target")
    check_same_grid(pred, target)
    return pred, target


def _weights(weight_map, shape):
    if weight_map is None:
        return np.ones(shape)
    w = as_mask(weight_map, "weight_map")
    if w.shape != shape:
        raise ValueError(f"weight map shape {w.shape} does not match {shape}")
    return w


def weighted_bce(pred, target, weight_map=None, delta: float = 1e-7) -> float:
    pred, target = _pair(pred, target)
    w = _weights(weight_map, pred.shape)
    p = np.clip(pred, delta, 1.0 - delta)
    bce = -target * np.log(p) - (1.0 - target) * np.log(1.0 - p)
    return float(np.sum(w * bce) / np.sum(w))


def weighted_iou_loss(pred, target, weight_map=None) -> float:
    pred, target = _pair(pred, target)
    w = _weights(weight_map, pred.shape)
    # min/max form: exactly 0 for identical soft masks, plain IoU on binary ones
    inter = np.sum(w * np.minimum(pred, target))
    union = np.sum(w * np.maximum(pred, target))
    if union <= 0:
        return 0.0
    return float(1.0 - inter / union)


def boundary_weight_map(target, radius: int = 2) -> np.ndarray:
    """1 + 5*|local box mean - target|: heavier weights near mask boundaries."""
    target = as_mask(target, "target")
    return 1.0 + 5.0 * np.abs(box_mean(target, radius) - target)


def mae(pred, target) -> float:
    pred, target = _pair(pred, target)
    return float(np.mean(np.abs(pred - target)))


def _binary(a, threshold):
    return np.asarray(a) >= threshold


def f_beta(pred, target, beta2: float = 0.3, target_threshold: float = 0.5) -> float:
    """F-measure at the adaptive threshold min(2*mean(pred), 1)."""
    pred, target = _pair(pred, target)
    thr = min(2.0 * float(pred.mean()), 1.0)
    p = pred >= thr if thr > 0 else pred > 0
    t = _binary(target, target_threshold)
    tp = np.count_nonzero(p & t)
    n_pred = np.count_nonzero(p)
    n_true = np.count_nonzero(t)
    if n_pred == 0 and n_true == 0:
        return 1.0
    if tp == 0:
        return 0.0
    precision = tp / n_pred
    recall = tp / n_true
    return float((1 + beta2) * precision * recall / (beta2 * precision + recall))


def m_iou(pred, target, threshold: float = 0.5) -> float:
    pred, target = _pair(pred, target)
    p = _binary(pred, threshold)
    t = _binary(target, threshold)
    union = np.count_nonzero(p | t)
    if union == 0:
        return 1.0
    return np.count_nonzero(p & t) / union


def m_dice(pred, target, threshold: float = 0.5) -> float:
    pred, target = _pair(pred, target)
    p = _binary(pred, threshold)
    t = _binary(target, threshold)
    total = np.count_nonzero(p) + np.count_nonzero(t)
    if total == 0:
        return 1.0
    return 2.0 * np.count_nonzero(p & t) / total


def psnr(pred, target, peak: float = 1.0) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    mse = float(np.mean((pred - target) ** 2))
    if mse < 1e-10:
        return 99.0
    return float(10.0 * np.log10(peak * peak / mse))


def stage_weights(K: int) -> list[float]:
    """1 / 2**(K-k) for k = 1..K."""
    return [2.0 ** (k - K) for k in range(1, K + 1)]


@dataclass
class LossBreakdown:
    per_stage: list[tuple[float, float, float]]
    stage_weights: list[float]
    l_basic: float
    l_csc: float = 0.0
    epsilon: float = 1.0
    l_total: float = field(init=False)

    def __post_init__(self):
        self.l_total = self.l_basic + self.epsilon * self.l_csc

    def with_epsilon(self, epsilon: float) -> "LossBreakdown":
        return LossBreakdown(self.per_stage, self.stage_weights, self.l_basic, self.l_csc, epsilon)

    @property
    def wbce(self) -> float:
        return self.per_stage[-1][0]

    @property
    def wiou(self) -> float:
        return self.per_stage[-1][1]


def l_basic(traces: Sequence, gt_mask, clean_x, cfg, csc_per_stage: Optional[Sequence[float]] = None) -> LossBreakdown:
    """Stage-weighted segmentation + restoration loss over a pipeline trace.

    ``traces`` holds the K stage states (stage 0 excluded).  The restoration
    term compares the last inner iterate of each stage to the clean image as
    a mean squared error.  ``csc_per_stage`` (already stage-weighted, as
    returned by the dual pipeline) is summed into ``l_csc``.
    """
    K = cfg.core.K
    # an early-stopped dual run may legitimately end before stage K
    if len(traces) != K and not (cfg.bui.csc_early_stop and 0 < len(traces) < K):
        raise ValueError(f"expected {K} stage states, got {len(traces)}")
    gt = as_mask(gt_mask, "gt_mask")
    clean = as_raster(clean_x, "clean_x")
    mc = cfg.metrics
    weights = stage_weights(K)[: len(traces)]
    per_stage = []
    total = 0.0
    for wk, st in zip(weights, traces):
        wmap = boundary_weight_map(gt, mc.weight_radius)
        bce = weighted_bce(st.mask, gt, wmap, mc.bce_delta)
        iou = weighted_iou_loss(st.mask, gt, wmap)
        xk = st.final_iterate
        check_same_shape(xk, clean)
        mse = float(np.mean((xk - clean) ** 2))
        per_stage.append((bce, iou, mse))
        total += wk * (bce + iou + mse)
    l_csc = float(sum(csc_per_stage)) if csc_per_stage is not None else 0.0
    return LossBreakdown(per_stage, weights, total, l_csc, mc.epsilon)
