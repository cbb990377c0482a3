"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -s``; the verdicts are
also repeated in the terminal summary. Criteria 6 to 8 train small models and
take several minutes in total.
"""

import contextlib
import time

import numpy as np
import torch

import desk
from nowcastlab import losses as L
from nowcastlab import patchwork as pw
from nowcastlab import transform as tf
from nowcastlab.losses import LossConfig
from nowcastlab.models import ModelConfig, build_model, check_finite, count_parameters, penalized_parameters
from nowcastlab.partition import build_split, enumerate_windows
from nowcastlab.samples import PRECIP, RELIEF, SampleSet, ViewSpec, fit_stats
from nowcastlab.trainer import TrainConfig, train
from test_models import KINDS, batch, expected_count
from test_patchwork import simulate_reach

LEADS_BEYOND_45 = (45, 60, 75, 90)


@contextlib.contextmanager
def criterion(report, n, budget_s=None):
    """Record PASS unless the body raises; a runtime budget is part of the verdict."""
    notes = []
    t0 = time.perf_counter()
    try:
        yield notes
    except Exception as e:
        report(f"criterion {n}", False, f"{type(e).__name__}: {' '.join(str(e).split())[:200]}")
        raise
    dt = time.perf_counter() - t0
    notes.append(f"{dt:.1f}s")
    ok = budget_s is None or dt < budget_s
    if not ok:
        notes.append(f"over the {budget_s}s budget")
    report(f"criterion {n}", ok, "; ".join(notes))
    assert ok, f"criterion {n} took {dt:.1f}s (budget {budget_s}s)"


def test_criterion_1_losses(report):
    with criterion(report, 1, 60) as notes:
        cfg = LossConfig(alpha=0.84)
        worst = 0.0
        for seed in range(3):
            rng = np.random.default_rng(seed)
            X = torch.tensor(rng.gamma(0.7, size=(16, 16)))
            Y = torch.tensor(rng.gamma(0.7, size=(16, 16)), requires_grad=True)
            theta = torch.tensor(rng.normal(size=(6,)), requires_grad=True)
            gy, gt = torch.autograd.grad(L.total_loss(X, Y, [theta], cfg), [Y, theta])
            for t, g in ((Y, gy), (theta, gt)):
                flat = t.detach().view(-1)
                num = torch.zeros_like(flat)
                for i in range(flat.numel()):
                    old = flat[i].item()
                    vals = []
                    for d in (1e-4, -1e-4):
                        flat[i] = old + d
                        vals.append(L.total_loss(X, Y.detach(), [theta.detach()], cfg).item())
                    flat[i] = old
                    num[i] = (vals[0] - vals[1]) / 2e-4
                rel = ((g.view(-1) - num).norm() / num.norm()).item()
                worst = max(worst, rel)
        assert worst < 1e-4, f"finite-difference relative error {worst:.2e}"
        notes.append(f"max grad rel err {worst:.1e}")

        Z = torch.randn(3, 24, 24, dtype=torch.float64)
        assert torch.all(L.ssim_map(Z, Z, cfg) == 1)

        flat = torch.full((2, 20, 20), 0.4, dtype=torch.float64)
        noisy = torch.randn(2, 20, 20, dtype=torch.float64)
        gap = abs(L.weighted_ssim(flat, noisy, cfg).item() - L.mean_ssim(flat, noisy, cfg).item())
        assert gap < 1e-9, gap

        p = torch.tensor([[0.0, 1.0]], dtype=torch.float64)
        q = torch.tensor([[0.1, 0.8]], dtype=torch.float64)
        assert abs(L.weighted_mse(p, q, cfg).item() - 0.0325) < 1e-9


def test_criterion_2_patches(report):
    with criterion(report, 2, 60) as notes:
        spec = pw.PatchSpec()
        rng = np.random.default_rng(0)
        src = rng.random((420, 420)) * 20
        origin = (90, 110)
        p = pw.extract_patch(src, spec, origin, keep_rects=True)
        x, y = origin
        assert np.array_equal(p.values[64:192, 64:192], src[x + 64 : x + 192, y + 64 : y + 192])

        effective = p.writes - ((p.writes == 2) & np.isin(p.owner, [pw.LEFT, pw.RIGHT]))
        assert (effective == 1).all()

        fp = pw._padded_window(src, *p.footprint)
        worst = max(abs(r.strip.mean() - fp[r.source].mean()) for r in p.rects)
        assert worst < 1e-5, worst
        notes.append(f"ring-mean err {worst:.1e}")

        assert pw.source_reach(spec) == simulate_reach(256, 128, 1, 20) == 136

        grid = rng.random((300, 420))
        tiles = pw.tile_map(grid, spec)
        back = pw.reassemble([(t, pw.target_block(pp.values, spec)) for pp, t in tiles], grid.shape)
        assert np.array_equal(back, grid)


def test_criterion_3_partition(report):
    with criterion(report, 3, 60):
        plan = build_split(20352, 47, 0)
        assert plan.n_sequences == 72 and plan.discarded == 48
        for seed in range(100):
            plan = build_split(20352, 47, seed)
            sets = [set(plan.frame_indices(s).tolist()) for s in ("train", "val", "test")]
            assert not (sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2]), seed
            assert sum(map(len, sets)) == 72 * 6 * 47
        for split in ("train", "val", "test"):
            wins = enumerate_windows(plan, split)
            assert len(wins) == 36 * len(plan.blocks(split))


def test_criterion_4_transforms(report):
    with criterion(report, 4) as notes:
        rng = np.random.default_rng(0)
        stats = tf.NormStats({PRECIP: 0.4}, {PRECIP: 0.9})
        worst = 0.0
        for _ in range(20):
            x = rng.uniform(0, 300, size=(64, 64))
            x[rng.random(x.shape) < 0.3] = 0
            back = tf.precip_inverse(tf.precip_forward(x, stats), stats)
            worst = max(worst, float(np.abs(back - x).max()))
        assert worst < 1e-6, worst
        notes.append(f"round trip err {worst:.1e}")

        raw = desk.toy_scene(0)
        plan = build_split(len(raw), 47, 0)
        st = fit_stats(raw, plan)
        z = tf.precip_forward(raw.precip[plan.frame_indices("train")], st)
        r = tf.zscore(raw.relief, st, RELIEF)
        for arr in (z, r):
            assert abs(arr.mean()) < 1e-6 and abs(arr.std() - 1) < 1e-6


def test_criterion_5_model_contracts(report):
    with criterion(report, 5, 300) as notes:
        checked = 0
        for kind in KINDS:
            for bw in (0.125, 0.25):
                for spatial in (64, 128):
                    m = build_model(ModelConfig(kind=kind, base_width=bw, spatial=spatial, seed=0)).train()
                    assert count_parameters(m) == expected_count(kind, bw, spatial), (kind, bw, spatial)
                    x, s, y = batch(spatial)
                    with torch.no_grad():
                        m.eval()
                        out = check_finite(m, x, s)
                        assert out.shape == (2, 6, spatial, spatial)
                    m.train()
                    loss = L.total_loss(y, m(x, s, y), list(penalized_parameters(m)), LossConfig()) + m.extra_loss()
                    loss.backward()
                    dead = [n for n, p in m.named_parameters() if p.grad is None or not torch.any(p.grad != 0)]
                    assert not dead, (kind, bw, spatial, dead[:3])
                    checked += 1
        notes.append(f"{checked} configurations")


def test_criterion_6_training_efficacy(report):
    with criterion(report, 6, 1200) as notes:
        run = desk.toy_run("wssim_wmse", 0)
        first, last = run.initial_train_loss(), run.final_train_loss()
        drop = 1 - last / first
        mae = desk.lead_values(run.model, "mae")
        base = desk.lead_values(run.baseline, "mae")
        notes.append(f"train loss {first:.3f}->{last:.3f} (-{drop:.0%})")
        notes.append("MAE model/persistence " + " ".join(f"+{k}:{mae[k]:.3f}/{base[k]:.3f}" for k in mae))
        assert drop >= 0.5, f"train loss fell only {drop:.0%}"
        losing = [k for k in LEADS_BEYOND_45 if not mae[k] < base[k]]
        assert not losing, f"persistence not beaten at {losing}"
        assert mae[90] >= mae[15], f"MAE +90 {mae[90]:.3f} < MAE +15 {mae[15]:.3f}"


def test_criterion_7_loss_ablation(report):
    t0 = time.perf_counter()
    wins, parts = 0, []
    for seed in range(3):
        a = desk.lead_values(desk.toy_run("wssim_wmse", seed).model, "f1_1.0")[90]
        b = desk.lead_values(desk.toy_run("mse", seed).model, "f1_1.0")[90]
        wins += a >= b
        parts.append(f"seed {seed} F1@1.0 +90 wssim+wmse {a:.3f} vs mse {b:.3f}")
    ok = wins >= 2
    report("criterion 7", ok, f"{wins}/3 seeds; " + "; ".join(parts)
           + f"; {time.perf_counter() - t0:.0f}s" + ("" if ok else " (report-only)"))


def test_criterion_8_patch_ablation(report):
    t0 = time.perf_counter()
    wins, parts = 0, []
    for seed in range(3):
        pa, na = desk.tiled_run("patch", seed).model, desk.tiled_run("naive", seed).model
        a, b = float(np.mean(pa.column("mae"))), float(np.mean(na.column("mae")))
        wins += a <= b
        far = desk.lead_values(pa, "mae")[90], desk.lead_values(na, "mae")[90]
        parts.append(f"seed {seed} MAE patch {a:.4f} vs naive {b:.4f} (+90: {far[0]:.3f} vs {far[1]:.3f})")
    ok = wins >= 2
    report("criterion 8", ok, f"{wins}/3 seeds; " + "; ".join(parts)
           + f"; {time.perf_counter() - t0:.0f}s" + ("" if ok else " (report-only)"))


def test_criterion_9_determinism(report, tmp_path):
    with criterion(report, 9):
        assert build_split(20352, 47, 5) == build_split(20352, 47, 5)
        assert build_split(20352, 47, 5) != build_split(20352, 47, 6)

        raw = desk.toy_scene(0)
        plan = build_split(len(raw), 47, 0)
        stats = fit_stats(raw, plan)
        sets = [SampleSet(raw, plan, s, ViewSpec("full", 64), stats) for s in ("train", "val")]
        outs = []
        for rep in ("a", "b"):
            m = build_model(ModelConfig(base_width=0.125, spatial=64, seed=7))
            cfg = TrainConfig(max_steps=20, eval_interval=10, seed=7, val_batches=4,
                              checkpoint_dir=str(tmp_path / "run"))
            train(m, *sets, LossConfig(), cfg)
            outs.append({n: (tmp_path / "run" / n).read_bytes() for n in ("curve.csv", "best.pt")})
        assert outs[0]["curve.csv"] == outs[1]["curve.csv"]
        assert outs[0]["best.pt"] == outs[1]["best.pt"]
