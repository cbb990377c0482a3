"""Lead-time-resolved verification: MAE, thresholded F1, persistence control."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

THRESHOLDS = (0.1, 1.0)
SCORE_COLUMNS = ("lead_time_min", "mae", "f1_0.1", "f1_1.0", "tp", "fp", "fn", "tn")


def _check_shapes(pred, truth):
    pred, truth = np.asarray(pred, dtype=np.float64), np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    return pred, truth


def mae(pred, truth) -> float:
    pred, truth = _check_shapes(pred, truth)
    return float(np.mean(np.abs(pred - truth)))


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    fn: int
    tn: int

    def __add__(self, other):
        return Confusion(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)

    @property
    def f1(self) -> float:
        # No positives anywhere scores 0 rather than NaN.
        denom = 2 * self.tp + self.fp + self.fn
        return 0.0 if denom == 0 else 2 * self.tp / denom


def confusion(pred, truth, threshold: float) -> Confusion:
    """Counts after binarizing both fields at ``value >= threshold``."""
    if threshold <= 0:
        raise ValueError("threshold must be > 0")
    pred, truth = _check_shapes(pred, truth)
    p, t = pred >= threshold, truth >= threshold
    tp = int(np.count_nonzero(p & t))
    fp = int(np.count_nonzero(p & ~t))
    fn = int(np.count_nonzero(~p & t))
    return Confusion(tp, fp, fn, p.size - tp - fp - fn)


def f1(pred, truth, threshold: float) -> float:
    return confusion(pred, truth, threshold).f1


def persistence_baseline(inputs, s_out: int = 6) -> np.ndarray:
    """Repeat the last input frame for all ``s_out`` lead times."""
    inputs = np.asarray(inputs)
    return np.repeat(inputs[-1][None], s_out, axis=0)


@dataclass
class LeadScore:
    lead_time_min: int
    mae: float
    f1_at: dict[float, float]
    counts: dict[float, Confusion]


@dataclass
class ScoreTable:
    rows: list[LeadScore] = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        if name == "mae":
            return np.array([r.mae for r in self.rows])
        if name.startswith("f1_"):
            thr = float(name[3:])
            return np.array([r.f1_at[thr] for r in self.rows])
        raise KeyError(name)

    def write_csv(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SCORE_COLUMNS)
            for r in self.rows:
                c = r.counts[THRESHOLDS[0]]
                w.writerow([r.lead_time_min, f"{r.mae:.9g}", f"{r.f1_at[0.1]:.9g}", f"{r.f1_at[1.0]:.9g}",
                            c.tp, c.fp, c.fn, c.tn])

    @classmethod
    def read_csv(cls, path) -> "ScoreTable":
        rows = []
        with open(path) as fh:
            for rec in csv.DictReader(fh):
                c = Confusion(int(rec["tp"]), int(rec["fp"]), int(rec["fn"]), int(rec["tn"]))
                rows.append(LeadScore(int(rec["lead_time_min"]), float(rec["mae"]),
                                      {0.1: float(rec["f1_0.1"]), 1.0: float(rec["f1_1.0"])}, {0.1: c}))
        return cls(rows)


def score_run(predictions, truths, lead_times=None, thresholds=THRESHOLDS, issue_times=None,
              valid_times=None, truth_times=None) -> ScoreTable:
    """Aggregate scores per lead time over aligned forecast/truth pairs.

    ``predictions`` and ``truths`` are sequences of (s_out, H, W) arrays.
    MAE is pooled over all pixels of all samples; F1 pools the confusion
    counts. When ``valid_times`` and ``truth_times`` are given they must
    match sample by sample.
    """
    predictions, truths = list(predictions), list(truths)
    if len(predictions) != len(truths) or not predictions:
        raise ValueError("need the same, non-zero number of predictions and truths")
    if valid_times is not None and truth_times is not None:
        for i, (a, b) in enumerate(zip(valid_times, truth_times)):
            if not np.array_equal(np.asarray(a), np.asarray(b)):
                raise ValueError(f"misaligned timestamps in sample {i}: {list(a)} vs {list(b)}")
    s_out = np.asarray(predictions[0]).shape[0]
    lead_times = list(lead_times) if lead_times is not None else [15 * (k + 1) for k in range(s_out)]
    rows = []
    for k, lt in enumerate(lead_times):
        abs_sum, n = 0.0, 0
        counts = {thr: Confusion(0, 0, 0, 0) for thr in thresholds}
        for p, t in zip(predictions, truths):
            p, t = _check_shapes(np.asarray(p)[k], np.asarray(t)[k])
            abs_sum += float(np.abs(p - t).sum())
            n += p.size
            for thr in thresholds:
                counts[thr] = counts[thr] + confusion(p, t, thr)
        rows.append(LeadScore(lt, abs_sum / n, {thr: c.f1 for thr, c in counts.items()}, counts))
    return ScoreTable(rows)


def plot_scores(tables: dict[str, ScoreTable], out_dir) -> list[Path]:
    """Metric-vs-lead-time figures, one line per labelled table."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for metric, label in (("mae", "MAE (mm/h)"), ("f1_0.1", "F1 @ 0.1 mm/h"), ("f1_1.0", "F1 @ 1 mm/h")):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        for name, table in tables.items():
            lts = [r.lead_time_min for r in table.rows]
            ax.plot(lts, table.column(metric), marker="o", label=name)
        ax.set_xlabel("lead time (min)")
        ax.set_ylabel(label)
        ax.grid(alpha=0.3)
        ax.legend()
        fig.tight_layout()
        p = out_dir / f"{metric}.png"
        fig.savefig(p, dpi=100)
        plt.close(fig)
        paths.append(p)
    return paths
