"""Command-line driver: dataset degradation, segmentation, evaluation and ablations.

Every subcommand works on a CSV manifest (see :mod:`nestedunfold.io`).  Per-image
work is spread over ``--threads`` workers; reports are assembled in manifest
order, so outputs do not depend on the worker count.  The exit status is 0
only when every image succeeded.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import io
from .config import ConfigError, RunConfig, load_config
from .degrade import apply_spec, derive_seed
from .metrics import (
    CSV_METRICS,
    boundary_weight_map,
    f_beta,
    l_basic,
    m_dice,
    m_iou,
    mae,
    psnr,
    weighted_bce,
    weighted_iou_loss,
)
from .pipeline import run_dual_pipeline

ABLATIONS = ("sodun_minus", "sodun", "derun", "bui")
SEGMENT_SWITCHES = ("none", "no-derun", "no-bui", "no-feedback")


@dataclass
class RunReport:
    """Per-image metric rows plus run metadata.  ``rows[i]`` maps metric -> value (NaN when unavailable)."""

    ids: list[str] = field(default_factory=list)
    rows: list[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    seed: int = 0
    wall_time: float = 0.0
    failures: list[dict] = field(default_factory=list)

    def aggregate(self) -> dict:
        out = {}
        for name in CSV_METRICS:
            vals = np.array([r.get(name, np.nan) for r in self.rows], dtype=np.float64)
            vals = vals[np.isfinite(vals)]
            out[name] = float(vals.mean()) if vals.size else np.nan
        return out

    def csv_rows(self, prefix: Sequence = ()) -> list[list]:
        rows = [list(prefix) + [i] + [_cell(r.get(m, np.nan)) for m in CSV_METRICS] for i, r in zip(self.ids, self.rows)]
        agg = self.aggregate()
        rows.append(list(prefix) + ["mean"] + [_cell(agg[m]) for m in CSV_METRICS])
        return rows

    def write(self, out_dir: Path, name: str = "report") -> None:
        io.write_csv(out_dir / f"{name}.csv", ["id", *CSV_METRICS], self.csv_rows())
        meta = {
            "seed": self.seed,
            "wall_time_s": self.wall_time,
            "n_images": len(self.ids),
            "failures": self.failures,
            "aggregate": {k: _json_num(v) for k, v in self.aggregate().items()},
            "config": self.config,
        }
        (out_dir / f"{name}.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")


def _cell(v):
    return "" if v is None or (isinstance(v, float) and not np.isfinite(v)) else float(v)


def _json_num(v):
    return None if not np.isfinite(v) else v


def _map_ordered(fn: Callable, items: list, threads: int) -> list:
    """Apply ``fn`` to every item; results keep input order; exceptions are captured."""

    def guarded(item):
        try:
            return fn(item), None
        except Exception as exc:  # per-item failures are reported, not fatal
            return None, f"{type(exc).__name__}: {exc}"

    if threads <= 1:
        return [guarded(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(guarded, items))


# ---------------------------------------------------------------- degrade


def cmd_degrade(manifest: io.DatasetManifest, cfg: RunConfig, out_dir, threads: int = 1) -> RunReport:
    """Write degraded copies of every manifest image plus provenance sidecars.

    Image ``i`` uses noise seed ``derive_seed(cfg.degrade.seed, i)``.  A new
    manifest pointing at the degraded images (with the source as ``clean``)
    is written next to them.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    spec = cfg.degrade
    t0 = time.perf_counter()

    def work(args):
        index, entry = args
        clean = io.read_image(entry.image)
        seed = derive_seed(spec.seed, index)
        y = apply_spec(clean, spec, seed=seed)
        out_path = out_dir / f"{entry.id}.png"
        io.write_image(out_path, y)
        sidecar = {"id": entry.id, "source": str(entry.image), "seed": seed, "spec": spec.to_dict()}
        (out_dir / f"{entry.id}.json").write_text(json.dumps(sidecar, indent=2) + "\n", encoding="utf-8")
        row = {"psnr": psnr(io.read_image(out_path), clean)}
        return io.ManifestEntry(entry.id, out_path, entry.mask, entry.image), row

    results = _map_ordered(work, list(enumerate(manifest.entries)), threads)
    report = RunReport(config=cfg.to_dict(), seed=spec.seed)
    new_entries = []
    for entry, (res, err) in zip(manifest.entries, results):
        if err is not None:
            report.failures.append({"id": entry.id, "error": err})
            continue
        new_entry, row = res
        new_entries.append(new_entry)
        report.ids.append(entry.id)
        report.rows.append(row)
    io.write_manifest(out_dir / "manifest.csv", new_entries)
    report.wall_time = time.perf_counter() - t0
    report.write(out_dir)
    return report


# ---------------------------------------------------------------- segment


def apply_switch(cfg: RunConfig, switch: str) -> RunConfig:
    if switch == "none":
        return cfg
    if switch == "no-derun":
        return cfg.replace(derun={"enabled": False})
    if switch == "no-bui":
        return cfg.replace(bui={"enabled": False})
    if switch == "no-feedback":
        return cfg.replace(sodun={"background_feedback": False})
    raise ValueError(f"unknown ablation switch {switch!r}")


def ablation_config(cfg: RunConfig, name: str) -> RunConfig:
    """The four cumulative ablation settings; ``bui`` is ``cfg`` itself."""
    if name == "bui":
        return cfg
    if name == "derun":
        return cfg.replace(bui={"enabled": False})
    if name == "sodun":
        return cfg.replace(derun={"enabled": False}, bui={"enabled": False})
    if name == "sodun_minus":
        return cfg.replace(
            derun={"enabled": False}, bui={"enabled": False}, sodun={"background_feedback": False}
        )
    raise ValueError(f"unknown ablation {name!r}")


def image_metrics(result, cfg: RunConfig, gt: Optional[np.ndarray], clean: Optional[np.ndarray]) -> dict:
    row = {name: np.nan for name in CSV_METRICS}
    row["l_csc"] = float(sum(result.csc_per_stage))
    mask = result.mask
    if gt is not None:
        wmap = boundary_weight_map(gt, cfg.metrics.weight_radius)
        row.update(
            mae=mae(mask, gt),
            f_beta=f_beta(mask, gt, cfg.metrics.beta2),
            m_iou=m_iou(mask, gt, cfg.core.binarize_threshold),
            m_dice=m_dice(mask, gt, cfg.core.binarize_threshold),
            wbce=weighted_bce(mask, gt, wmap, cfg.metrics.bce_delta),
            wiou=weighted_iou_loss(mask, gt, wmap),
        )
    if clean is not None:
        row["psnr"] = psnr(result.restored, clean)
    if gt is not None and clean is not None:
        loss = l_basic(result.trace, gt, clean, cfg, result.csc_per_stage)
        row.update(l_basic=loss.l_basic, l_total=loss.l_total)
    return row


def cmd_segment(
    manifest: io.DatasetManifest,
    cfg: RunConfig,
    out_dir,
    threads: int = 1,
    save_raw: bool = False,
) -> RunReport:
    """Run the dual pipeline on every image and write masks, restorations and a report."""
    out_dir = Path(out_dir)
    for sub in ("masks", "masks_soft", "restored", "csc") + (("raw",) if save_raw else ()):
        (out_dir / sub).mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()

    def work(entry):
        y = io.read_image(entry.image)
        gt = io.read_mask(entry.mask) if entry.mask is not None else None
        clean = io.read_image(entry.clean) if entry.clean is not None else None
        result = run_dual_pipeline(y, cfg)
        mask = result.mask
        io.write_mask(out_dir / "masks" / f"{entry.id}.png", (mask >= cfg.core.binarize_threshold).astype(np.float64))
        io.write_mask(out_dir / "masks_soft" / f"{entry.id}.png", mask)
        io.write_image(out_dir / "restored" / f"{entry.id}.png", result.restored)
        diag = {
            "id": entry.id,
            "csc_per_stage": result.csc_per_stage,
            "t1_index": [s.t1_index for s in result.trace],
            "t2_index": [s.t2_index for s in result.trace],
            "quality_scores": [s.quality_scores for s in result.trace],
        }
        (out_dir / "csc" / f"{entry.id}.json").write_text(json.dumps(diag, indent=2) + "\n", encoding="utf-8")
        if save_raw:
            raw = out_dir / "raw"
            io.write_raw(raw / f"{entry.id}_mask.nunr", mask)
            io.write_raw(raw / f"{entry.id}_background.nunr", result.trace[-1].background)
            io.write_raw(raw / f"{entry.id}_restored.nunr", result.restored)
        return image_metrics(result, cfg, gt, clean)

    results = _map_ordered(work, list(manifest.entries), threads)
    report = RunReport(config=cfg.to_dict(), seed=cfg.core.seed)
    for entry, (row, err) in zip(manifest.entries, results):
        if err is not None:
            report.failures.append({"id": entry.id, "error": err})
            continue
        report.ids.append(entry.id)
        report.rows.append(row)
    report.wall_time = time.perf_counter() - t0
    report.write(out_dir)
    return report


# ---------------------------------------------------------------- eval


def cmd_eval(pred_dir, gt_manifest: io.DatasetManifest, cfg: RunConfig, out_path=None) -> RunReport:
    """Score predicted mask PNGs in ``pred_dir`` against manifest masks, paired by id/stem."""
    pred_dir = Path(pred_dir)
    t0 = time.perf_counter()
    preds = {p.stem: p for p in sorted(pred_dir.glob("*.png"))}
    gts = {e.id: e for e in gt_manifest.entries if e.mask is not None}
    report = RunReport(config=cfg.to_dict(), seed=cfg.core.seed)
    for stem in sorted(set(preds) - set(gts)):
        report.failures.append({"id": stem, "error": "prediction without ground truth"})
    for ident in gts:
        if ident not in preds:
            report.failures.append({"id": ident, "error": "ground truth without prediction"})
    thr = cfg.core.binarize_threshold
    for ident, entry in gts.items():
        if ident not in preds:
            continue
        try:
            pred = io.read_mask(preds[ident])
            gt = io.read_mask(entry.mask)
            row = {name: np.nan for name in CSV_METRICS}
            wmap = boundary_weight_map(gt, cfg.metrics.weight_radius)
            row.update(
                mae=mae(pred, gt),
                f_beta=f_beta(pred, gt, cfg.metrics.beta2),
                m_iou=m_iou(pred, gt, thr),
                m_dice=m_dice(pred, gt, thr),
                wbce=weighted_bce(pred, gt, wmap, cfg.metrics.bce_delta),
                wiou=weighted_iou_loss(pred, gt, wmap),
            )
        except Exception as exc:
            report.failures.append({"id": ident, "error": f"{type(exc).__name__}: {exc}"})
            continue
        report.ids.append(ident)
        report.rows.append(row)
    report.wall_time = time.perf_counter() - t0
    if out_path is not None:
        out_path = Path(out_path)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        report.write(out_path.parent, out_path.stem)
    return report


# ---------------------------------------------------------------- ablate


def cmd_ablate(manifest: io.DatasetManifest, cfg: RunConfig, out_dir, threads: int = 1) -> dict[str, RunReport]:
    """Segment under each ablation setting and write one combined CSV with a ``config`` column."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    reports = {}
    rows = []
    for name in ABLATIONS:
        rep = cmd_segment(manifest, ablation_config(cfg, name), out_dir / name, threads)
        reports[name] = rep
        rows.extend(rep.csv_rows(prefix=[name]))
    io.write_csv(out_dir / "ablation.csv", ["config", "id", *CSV_METRICS], rows)
    full = reports["bui"].aggregate()["m_iou"]
    minus = reports["sodun_minus"].aggregate()["m_iou"]
    trend = {
        "m_iou_sodun_minus": _json_num(minus),
        "m_iou_full": _json_num(full),
        "full_not_worse": bool(np.isfinite(full) and np.isfinite(minus) and full >= minus),
    }
    (out_dir / "ablation.json").write_text(json.dumps(trend, indent=2) + "\n", encoding="utf-8")
    return reports


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nestedunfold", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--seed", type=int, help="override core.seed and the degradation seed")
    parser.add_argument("--threads", type=int, default=1, help="per-image worker count (default 1)")
    parser.add_argument("--dump-config", action="store_true", help="print the effective config as JSON and exit")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("degrade", help="write degraded copies of a manifest's images")
    p.add_argument("manifest")
    p.add_argument("out_dir")

    p = sub.add_parser("segment", help="segment and restore every manifest image")
    p.add_argument("manifest")
    p.add_argument("out_dir")
    p.add_argument("--ablate", choices=SEGMENT_SWITCHES, default="none", help="disable one component")
    p.add_argument("--save-raw", action="store_true", help="also write float32 NUNR tensors")

    p = sub.add_parser("eval", help="score predicted masks against a ground-truth manifest")
    p.add_argument("pred_dir")
    p.add_argument("gt_manifest")
    p.add_argument("--out", default=None, help="report CSV path (default: <pred_dir>/eval.csv)")

    p = sub.add_parser("ablate", help="run the four ablation settings")
    p.add_argument("manifest")
    p.add_argument("out_dir")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        degrade = cfg.degrade.to_dict()
        degrade["seed"] = args.seed
        cfg = cfg.replace(core={"seed": args.seed}, degrade=degrade)
    return cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.dump_config:
        print(cfg.dumps())
        return 0
    if args.command is None:
        parser.print_help(sys.stderr)
        return 2
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        if args.command == "degrade":
            reports = [cmd_degrade(io.read_manifest(args.manifest), cfg, args.out_dir, args.threads)]
        elif args.command == "segment":
            cfg = apply_switch(cfg, args.ablate)
            reports = [cmd_segment(io.read_manifest(args.manifest), cfg, args.out_dir, args.threads, args.save_raw)]
        elif args.command == "eval":
            out = args.out or Path(args.pred_dir) / "eval.csv"
            reports = [cmd_eval(args.pred_dir, io.read_manifest(args.gt_manifest), cfg, out)]
        else:
            reports = list(cmd_ablate(io.read_manifest(args.manifest), cfg, args.out_dir, args.threads).values())
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 1
    failures = [f for r in reports for f in r.failures]
    for f in failures:
        print(f"failed: {f['id']}: {f['error']}", file=sys.stderr)
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
