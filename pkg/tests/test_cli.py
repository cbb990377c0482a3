import csv
import json

import pytest

from nowcastlab import grid_store as gs
from nowcastlab.cli import load_config, main

SMALL = """
[scene]
frame_count = 282
rows = 32
cols = 32
[view]
spatial = 32
tsize = 16
freq = 2
[train]
max_steps = 4
eval_interval = 2
val_batches = 2
"""


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "small.ini"
    cfg.write_text(SMALL)
    assert main(["synth", "--config", str(cfg), "--out", str(root / "data")]) == 0
    assert main(["split", "--config", str(cfg), "--data", str(root / "data"), "--out", str(root / "plan.json")]) == 0
    return root, cfg


def pipeline(root, cfg, name, mode="full", seed=None):
    out = root / name
    extra = ["--seed", str(seed)] if seed is not None else []
    c = ["--config", str(cfg)]
    assert main(["train", *c, "--data", str(root / "data"), "--plan", str(root / "plan.json"),
                 "--mode", mode, "--out", str(out / "run"), *extra]) == 0
    assert main(["predict", *c, "--ckpt", str(out / "run" / "best.pt"), "--out", str(out / "pred")]) == 0
    assert main(["evaluate", *c, "--pred", str(out / "pred"), "--truth", str(root / "data"),
                 "--out", str(out / "scores.csv")]) == 0
    return out


def test_full_pipeline(work, capsys):
    root, cfg = work
    out = pipeline(root, cfg, "full")
    with open(out / "scores.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [int(r["lead_time_min"]) for r in rows] == [15, 30, 45, 60, 75, 90]
    for name in ("best.pt", "curve.csv", "split.json", "provenance.json"):
        assert (out / "run" / name).exists()
    prov = json.loads((out / "run" / "provenance.json").read_text())
    assert prov["command"] == "train" and len(prov["config_hash"]) == 64 and prov["seed"] == 0
    assert prov["config"]["train"]["max_steps"] == 4
    assert main(["plot", "--scores", f"full={out / 'scores.csv'}", "--out", str(out / "fig")]) == 0
    assert sorted(p.name for p in (out / "fig").glob("*.png")) == ["f1_0.1.png", "f1_1.0.png", "mae.png"]


def test_views_predict_full_map(work):
    root, cfg = work
    shapes = set()
    for mode in ("resize", "patch", "naive"):
        out = pipeline(root, cfg, mode)
        first = sorted(p for p in (out / "pred").iterdir() if p.is_dir())[0]
        shapes.add(gs.read_dataset(first)["precip_mm_per_h"].values.shape)
    assert shapes == {(6, 32, 32)}


def test_rerun_is_bit_identical(work):
    root, cfg = work
    names = ("run/best.pt", "run/curve.csv", "run/split.json", "run/provenance.json", "scores.csv")
    out = pipeline(root, cfg, "again", seed=3)
    first = {n: (out / n).read_bytes() for n in names}
    pipeline(root, cfg, "again", seed=3)
    for n in names:
        assert (out / n).read_bytes() == first[n], n
    assert json.loads(first["run/provenance.json"])["config"]["train"]["seed"] == 3


@pytest.mark.parametrize("mode", ["patch", "naive", "resize"])
def test_patchify(work, mode):
    root, _ = work
    out = root / f"patchify_{mode}"
    assert main(["patchify", "--data", str(root / "data"), "--isize", "32", "--tsize", "16", "--freq", "2",
                 "--mode", mode, "--out", str(out)]) == 0
    if mode == "resize":
        assert gs.read_dataset(out)["precip_mm_per_h"].values.shape == (282, 32, 32)
        return
    tiles = sorted(out.glob("tile_*"))
    assert len(tiles) == 4
    meta = json.loads((tiles[0] / "tile.json").read_text())
    assert meta["mode"] == mode and meta["map_shape"] == [32, 32]
    seqs = gs.read_dataset(tiles[0])
    assert seqs["precip_mm_per_h"].values.shape == (282, 32, 32)
    assert {"relief_m", "temp_profile_frac_0"} <= set(seqs)


def test_usage_errors_exit_2(work, capsys):
    root, _ = work
    with pytest.raises(SystemExit) as e:
        main(["train", "--bogus"])
    assert e.value.code == 2
    assert "usage" in capsys.readouterr().err
    with pytest.raises(SystemExit) as e:
        main([])
    assert e.value.code == 2
    bad = root / "bad.ini"
    bad.write_text("[train]\nwarp_speed = 9\n")
    assert main(["train", "--config", str(bad), "--data", str(root / "data"), "--out", str(root / "x")]) == 2
    assert "warp_speed" in capsys.readouterr().err
    assert main(["synth", "--config", str(root / "nope.ini"), "--out", str(root / "y")]) == 2
    assert main(["train", "--data", str(root / "data"), "--loss", "nope", "--out", str(root / "z")]) == 2


def test_runtime_failure_exit_1(work, capsys):
    root, _ = work
    assert main(["split", "--data", str(root / "missing"), "--out", str(root / "p.json")]) == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("nowcastlab split:")


def test_full_view_size_mismatch_is_config_error(work, capsys):
    root, _ = work
    assert main(["train", "--data", str(root / "data"), "--out", str(root / "w"), "--steps", "1"]) == 2
    assert "64x64" in capsys.readouterr().err


def test_bundled_config_is_overlaid(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[train]\nmax_steps = 7\n")
    cp = load_config(p)
    assert cp.getint("train", "max_steps") == 7
    assert cp.getint("scene", "rows") == 64


def test_bundled_toy_config_end_to_end(tmp_path):
    data, run, pred = tmp_path / "data", tmp_path / "run", tmp_path / "pred"
    assert main(["synth", "--out", str(data)]) == 0
    assert main(["train", "--data", str(data), "--out", str(run)]) == 0
    assert main(["predict", "--ckpt", str(run / "best.pt"), "--out", str(pred)]) == 0
    assert main(["evaluate", "--pred", str(pred), "--truth", str(data), "--out", str(tmp_path / "scores.csv")]) == 0
    assert len((tmp_path / "scores.csv").read_text().splitlines()) == 1 + 6
