import csv
import json

import numpy as np
import pytest

from nestedunfold import io
from nestedunfold.cli import ABLATIONS, main
from nestedunfold.config import RunConfig
from nestedunfold.metrics import CSV_METRICS, psnr
from nestedunfold.toy import write_toy_dataset


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    manifest = write_toy_dataset(root / "clean", n=3, size=24, seed=4)
    assert main(["degrade", str(manifest), str(root / "deg")]) == 0
    return root, manifest, root / "deg" / "manifest.csv"


def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def test_dump_config_round_trips(capsys, tmp_path):
    assert main(["--seed", "7", "--dump-config"]) == 0
    text = capsys.readouterr().out
    cfg = RunConfig.from_dict(json.loads(text))
    assert cfg.core.seed == 7 and cfg.degrade.seed == 7
    path = tmp_path / "c.json"
    path.write_text(text)
    assert main(["--config", str(path), "--dump-config"]) == 0
    assert capsys.readouterr().out == text


def test_bad_config_exit_code(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"core": {"bogus": 1}}))
    assert main(["--config", str(path), "--dump-config"]) == 2


def test_degrade_outputs(dataset):
    root, manifest, deg = dataset
    rows = _read_csv(deg)
    assert rows[0] == ["id", "image", "mask", "clean"] and len(rows) == 4
    side = json.loads((root / "deg" / "toy000.json").read_text())
    assert side["spec"]["kind"] == "composite" and isinstance(side["seed"], int)
    for e in io.read_manifest(deg).entries:
        assert psnr(io.read_image(e.image), io.read_image(e.clean)) < 30.0


def test_degrade_is_reproducible_and_seed_sensitive(dataset, tmp_path):
    root, manifest, _ = dataset
    assert main(["degrade", str(manifest), str(tmp_path / "a")]) == 0
    assert main(["--seed", "1", "degrade", str(manifest), str(tmp_path / "b")]) == 0
    first = (root / "deg" / "toy001.png").read_bytes()
    assert (tmp_path / "a" / "toy001.png").read_bytes() == first
    assert (tmp_path / "b" / "toy001.png").read_bytes() != first


def test_identity_degradation_copies_images(dataset, tmp_path):
    _, manifest, _ = dataset
    cfg = tmp_path / "id.json"
    cfg.write_text(json.dumps({"degrade": {"kind": "low_light", "gamma": 1.0, "gain": 1.0, "noise_sigma": 0.0}}))
    assert main(["--config", str(cfg), "degrade", str(manifest), str(tmp_path / "out")]) == 0
    for e in io.read_manifest(manifest).entries:
        assert np.array_equal(io.read_image(tmp_path / "out" / f"{e.id}.png"), io.read_image(e.image))


def test_segment_outputs_and_schema(dataset, tmp_path):
    _, _, deg = dataset
    out = tmp_path / "seg"
    assert main(["segment", str(deg), str(out), "--save-raw"]) == 0
    rows = _read_csv(out / "report.csv")
    assert rows[0] == ["id", *CSV_METRICS]
    assert [r[0] for r in rows[1:]] == ["toy000", "toy001", "toy002", "mean"]
    values = np.array([[float(v) for v in r[1:]] for r in rows[1:-1]])
    assert np.allclose(values.mean(axis=0), [float(v) for v in rows[-1][1:]])
    meta = json.loads((out / "report.json").read_text())
    assert meta["failures"] == [] and "wall_time_s" in meta and meta["config"]["core"]["K"] == 4
    mask = io.read_mask(out / "masks" / "toy000.png")
    assert set(np.unique(mask)) <= {0.0, 1.0}
    diag = json.loads((out / "csc" / "toy000.json").read_text())
    assert len(diag["csc_per_stage"]) == 4
    assert io.read_raw(out / "raw" / "toy000_restored.nunr").shape == (24, 24, 3)


def test_segment_no_derun_switch(dataset, tmp_path):
    _, _, deg = dataset
    out = tmp_path / "nd"
    assert main(["segment", str(deg), str(out), "--ablate", "no-derun", "--save-raw"]) == 0
    entry = io.read_manifest(deg).entries[0]
    restored = io.read_raw(out / "raw" / f"{entry.id}_restored.nunr")
    y = io.read_image(entry.image)
    assert np.array_equal(restored, y.astype(np.float32).astype(np.float64))


def test_segment_records_failures(dataset, tmp_path):
    root, _, deg = dataset
    broken = tmp_path / "broken.png"
    broken.write_bytes(b"not a png")
    rows = deg.read_text().splitlines()
    rows.append(f"bad,{broken},,")
    bad_manifest = root / "deg" / "with_bad.csv"
    bad_manifest.write_text("\n".join(rows) + "\n")
    out = tmp_path / "seg"
    assert main(["segment", str(bad_manifest), str(out)]) == 1
    meta = json.loads((out / "report.json").read_text())
    assert [f["id"] for f in meta["failures"]] == ["bad"]
    assert len(_read_csv(out / "report.csv")) == 5


def test_eval_examples(tmp_path):
    gt_dir = tmp_path / "gt"
    gt_dir.mkdir()
    gt = np.array([[1.0, 0.0], [1.0, 0.0]])
    io.write_image(gt_dir / "a.png", np.zeros((2, 2, 3)))
    io.write_mask(gt_dir / "a_gt.png", gt)
    io.write_manifest(gt_dir / "m.csv", [io.ManifestEntry("a", gt_dir / "a.png", gt_dir / "a_gt.png")])

    def run(pred, name):
        pdir = tmp_path / name
        pdir.mkdir()
        io.write_mask(pdir / "a.png", pred)
        assert main(["eval", str(pdir), str(gt_dir / "m.csv")]) == 0
        rows = _read_csv(pdir / "eval.csv")
        return dict(zip(rows[0], rows[1]))

    same = run(gt, "same")
    assert float(same["mae"]) == 0 and float(same["f_beta"]) == 1 and float(same["m_iou"]) == 1
    assert float(run(1 - gt, "inv")["m_iou"]) == 0
    half = run(np.array([[1.0, 1.0], [0.0, 0.0]]), "half")
    assert float(half["mae"]) == 0.5
    assert float(half["m_iou"]) == pytest.approx(1 / 3)
    assert float(half["m_dice"]) == pytest.approx(0.5)


def test_eval_reports_unmatched(tmp_path):
    gt_dir = tmp_path / "gt"
    gt_dir.mkdir()
    io.write_image(gt_dir / "a.png", np.zeros((2, 2, 3)))
    io.write_mask(gt_dir / "a_gt.png", np.zeros((2, 2)))
    io.write_manifest(gt_dir / "m.csv", [io.ManifestEntry("a", gt_dir / "a.png", gt_dir / "a_gt.png")])
    pdir = tmp_path / "pred"
    pdir.mkdir()
    io.write_mask(pdir / "a.png", np.zeros((2, 2)))
    io.write_mask(pdir / "stray.png", np.zeros((2, 2)))
    assert main(["eval", str(pdir), str(gt_dir / "m.csv")]) == 1
    meta = json.loads((pdir / "eval.json").read_text())
    assert [f["id"] for f in meta["failures"]] == ["stray"]
    assert [r[0] for r in _read_csv(pdir / "eval.csv")[1:]] == ["a", "mean"]


def test_ablate(dataset, tmp_path):
    _, _, deg = dataset
    out = tmp_path / "abl"
    assert main(["ablate", str(deg), str(out)]) == 0
    rows = _read_csv(out / "ablation.csv")
    assert rows[0] == ["config", "id", *CSV_METRICS]
    assert {r[0] for r in rows[1:]} == set(ABLATIONS)
    seg = tmp_path / "seg"
    assert main(["segment", str(deg), str(seg)]) == 0
    full_rows = [r[1:] for r in rows[1:] if r[0] == "bui"]
    assert full_rows == _read_csv(seg / "report.csv")[1:]
    trend = json.loads((out / "ablation.json").read_text())
    assert set(trend) == {"m_iou_sodun_minus", "m_iou_full", "full_not_worse"}
