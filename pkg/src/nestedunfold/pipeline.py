"""End-to-end nested unfolding: K outer stages, each with its own inner restoration loop."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import bui
from .core import StageState, as_raster
from .derun import DegradationOp
from .metrics import boundary_weight_map, stage_weights
from .sodun import mask_steps, run_outer_stage


@dataclass
class DualResult:
    trace: list[StageState]
    t2_masks: list[np.ndarray]
    csc_per_stage: list[float]

    @property
    def mask(self) -> np.ndarray:
        return self.trace[-1].mask

    @property
    def restored(self) -> np.ndarray:
        return self.trace[-1].x_t1

    def __iter__(self):
        return iter((self.trace, self.t2_masks, self.csc_per_stage))


def run_pipeline(y, cfg, operator: Optional[DegradationOp] = None) -> list[StageState]:
    """Stage states 1..K (zero-initialised mask/background, X_0 = Y)."""
    y = as_raster(y, "y")
    state = StageState.initial(y)
    trace = []
    for _ in range(cfg.core.K):
        state = run_outer_stage(state, y, cfg, operator)
        trace.append(state)
    return trace


def run_dual_pipeline(y, cfg, operator: Optional[DegradationOp] = None) -> DualResult:
    """Primary pipeline plus, per stage, the mask obtained from the second-best restoration.

    The shadow branch re-runs only the mask updates of stage k from the same
    previous state but driven by X_{k-1}^{T2}; it never feeds back into the
    primary trace.  ``csc_per_stage[k-1]`` is the weighted BCE + IoU divergence
    of M_k from M_k^{T2}, multiplied by 1/2**(K-k).
    """
    y = as_raster(y, "y")
    K = cfg.core.K
    weights = stage_weights(K)
    state = StageState.initial(y)
    trace, t2_masks, csc = [], [], []
    for k in range(1, K + 1):
        shadow = mask_steps(state, state.x_t2, y, cfg)
        state = run_outer_stage(state, y, cfg, operator)
        wmap = boundary_weight_map(shadow, cfg.metrics.weight_radius)
        div = bui.csc_divergence(state.mask, shadow, wmap, cfg.metrics.bce_delta)
        trace.append(state)
        t2_masks.append(shadow)
        csc.append(weights[k - 1] * div)
        if cfg.bui.csc_early_stop and div <= cfg.bui.csc_threshold:
            break
    return DualResult(trace, t2_masks, csc)
