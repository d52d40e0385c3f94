"""Switch components off one at a time on a small synthetic set.

Settings, each adding one piece to the previous:

* sodun_minus: mask/background updates only, no background cue in the mask
* sodun: adds the background cue
* derun: adds the inner restoration loop
* bui: adds quality-based selection of the restored iterate (full pipeline)

Run with ``python demos/ablation_toy.py``.
"""

import numpy as np

from nestedunfold import RunConfig, apply_spec, run_pipeline
from nestedunfold.cli import ABLATIONS, ablation_config
from nestedunfold.metrics import m_iou, psnr
from nestedunfold.toy import make_toy_set

base = RunConfig().replace(derun={"operator": "oracle"})
data = make_toy_set(8, 64)
ys = [apply_spec(x, base.degrade, seed=i) for i, (x, _) in enumerate(data)]

print(f"{'setting':<12} {'mIoU':>6} {'PSNR':>7}")
for name in ABLATIONS:
    cfg = ablation_config(base, name)
    ious, psnrs = [], []
    for y, (x, gt) in zip(ys, data):
        last = run_pipeline(y, cfg)[-1]
        ious.append(m_iou(last.mask, gt))
        psnrs.append(psnr(last.x_t1, x))
    print(f"{name:<12} {np.mean(ious):6.3f} {np.mean(psnrs):7.2f}")
