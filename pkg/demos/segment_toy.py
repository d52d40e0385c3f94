"""Follow the mask and background through the outer stages on one scene.

Prints per-stage mask statistics inside and outside the true object, the
cross-stage consistency term, and the final segmentation scores.  Run with
``python demos/segment_toy.py``.
"""

from nestedunfold import RunConfig, apply_spec, run_dual_pipeline
from nestedunfold.metrics import f_beta, m_dice, m_iou, mae
from nestedunfold.toy import make_toy_sample

clean, gt = make_toy_sample(seed=3, size=64)
cfg = RunConfig().replace(derun={"operator": "oracle"})
y = apply_spec(clean, cfg.degrade, seed=3)

result = run_dual_pipeline(y, cfg)
inside, outside = gt > 0.5, gt <= 0.5
for state, csc in zip(result.trace, result.csc_per_stage):
    m = state.mask
    print(
        f"stage {state.stage_index}: mask mean inside {m[inside].mean():.3f}, "
        f"outside {m[outside].mean():.3f}, weighted CSC {csc:.4f}"
    )

m = result.mask
print(f"final: MAE {mae(m, gt):.3f}  F_beta {f_beta(m, gt):.3f}  IoU {m_iou(m, gt):.3f}  Dice {m_dice(m, gt):.3f}")

# the background layer is what the mask is measured against: the object is the
# part of the image the smooth background cannot explain
b = result.trace[-1].background.mean(axis=2)
print(f"background mean inside {b[inside].mean():.3f}, outside {b[outside].mean():.3f}")
