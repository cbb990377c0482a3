"""Optimization loop, checkpoints, learning curves and mm/h prediction."""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .losses import LossConfig, loss_terms
from .models import ModelConfig, Nowcaster, build_model, penalized_parameters
from .samples import SampleSet, window_batches
from .transform import NormStats

log = logging.getLogger(__name__)

CURVE_COLUMNS = ("step", "split", "loss_total", "loss_wssim", "loss_wmse")
CHECKPOINT_NAME = "best.pt"


@dataclass
class TrainConfig:
    learning_rate: float = 2e-4
    batch_size: int = 4
    max_steps: int = 500
    eval_interval: int = 50
    patience: int | None = None
    """Evaluations without validation improvement before stopping; None disables."""
    val_batches: int | None = None
    """Cap on validation batches per evaluation; None uses the whole split."""
    grad_clip: float | None = None
    seed: int = 0
    checkpoint_dir: str | None = None

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    def to_dict(self):
        return asdict(self)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainResult:
    model: Nowcaster
    curve: list[dict] = field(default_factory=list)
    best_step: int = -1
    best_val: float = float("inf")
    checkpoint: Path | None = None

    def rows(self, split: str) -> list[dict]:
        return [r for r in self.curve if r["split"] == split]


def set_determinism(seed: int):
    torch.manual_seed(seed)
    np.random.seed(seed % 2**32)
    torch.use_deterministic_algorithms(True)


def _terms(model, ss: SampleSet, x, s, y, loss_cfg):
    pred = ss.crop(model(x, s, y))
    t = loss_terms(y, pred, penalized_parameters(model), loss_cfg)
    return t._replace(total=t.total + model.extra_loss())


def evaluate(model: Nowcaster, ss: SampleSet, loss_cfg: LossConfig, batch_size: int = 4, max_batches=None) -> dict:
    """Mean loss terms over a split, with the model in eval mode."""
    was = model.training
    model.eval()
    sums = np.zeros(3)
    n = 0
    with torch.no_grad():
        order = range(0, len(ss), batch_size)
        for b, start in enumerate(order):
            if max_batches is not None and b >= max_batches:
                break
            x, s, y = ss.batch(range(start, min(start + batch_size, len(ss))))
            t = _terms(model, ss, x, s, y, loss_cfg)
            sums += [t.total.item(), t.wssim.item(), t.wmse.item()]
            n += 1
    model.train(was)
    total, ws, wm = (sums / max(n, 1)).tolist()
    return {"loss_total": total, "loss_wssim": ws, "loss_wmse": wm}


def _check_provenance(train_set: SampleSet, val_set: SampleSet):
    if train_set.split != "train" or val_set.split != "val":
        raise TrainingError(f"expected train/val splits, got {train_set.split}/{val_set.split}")
    test = set(train_set.plan.frame_indices("test").tolist())
    for ss in (train_set, val_set):
        if test.intersection(ss.frames.tolist()):
            raise TrainingError(f"{ss.split} samples touch test-split frames")


def save_checkpoint(path, model: Nowcaster, stats: NormStats, meta: dict):
    """Atomic write: temp file then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "state_dict": model.state_dict(),
        "model_config": model.config.to_dict(),
        "norm_stats": stats.to_dict(),
        **meta,
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(payload, tmp)
    os.replace(tmp, path)


def load_checkpoint(path) -> tuple[Nowcaster, dict]:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    model = build_model(ModelConfig.from_dict(payload["model_config"]))
    model.load_state_dict(payload["state_dict"])
    model.eval()
    payload["norm_stats"] = NormStats.from_dict(payload["norm_stats"])
    return model, payload


def write_curve(rows, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CURVE_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{r[k]:.9g}" if isinstance(r[k], float) else r[k]) for k in CURVE_COLUMNS})


def train(model: Nowcaster, train_set: SampleSet, val_set: SampleSet, loss_cfg: LossConfig,
          cfg: TrainConfig, meta: dict | None = None) -> TrainResult:
    """Adam on the combined loss; keeps the best-validation weights.

    A train row is logged at step 0 (loss of the first batch before any
    update) and then every ``eval_interval`` steps as the mean batch loss
    over the interval, alongside a val row.
    """
    _check_provenance(train_set, val_set)
    set_determinism(cfg.seed)
    gen = torch.Generator().manual_seed(cfg.seed)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    result = TrainResult(model)
    ckpt = Path(cfg.checkpoint_dir) / CHECKPOINT_NAME if cfg.checkpoint_dir else None
    best_state = None
    meta = dict(meta or {})
    meta.update(loss_config=loss_cfg.to_dict(), train_config=cfg.to_dict(), view=train_set.view.to_dict())

    def record(step, split, vals):
        result.curve.append({"step": step, "split": split, **vals})

    order = torch.randperm(len(train_set), generator=gen)
    cursor, bad_evals = 0, 0
    acc, acc_n = np.zeros(3), 0
    model.train()
    for step in range(1, cfg.max_steps + 1):
        if cursor + cfg.batch_size > len(order):
            order = torch.randperm(len(train_set), generator=gen)
            cursor = 0
        idx = order[cursor : cursor + cfg.batch_size]
        cursor += cfg.batch_size
        x, s, y = train_set.batch(idx)
        t = _terms(model, train_set, x, s, y, loss_cfg)
        if not torch.isfinite(t.total):
            raise TrainingError(f"non-finite loss at step {step}")
        vals = np.array([t.total.item(), t.wssim.item(), t.wmse.item()])
        if step == 1:
            record(0, "train", dict(zip(CURVE_COLUMNS[2:], vals.tolist())))
        acc += vals
        acc_n += 1
        opt.zero_grad(set_to_none=True)
        t.total.backward()
        if cfg.grad_clip:
            torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
        opt.step()

        if step % cfg.eval_interval == 0 or step == cfg.max_steps:
            record(step, "train", dict(zip(CURVE_COLUMNS[2:], (acc / acc_n).tolist())))
            acc, acc_n = np.zeros(3), 0
            v = evaluate(model, val_set, loss_cfg, cfg.batch_size, cfg.val_batches)
            record(step, "val", v)
            log.info("step %d train %.4f val %.4f", step, result.curve[-2]["loss_total"], v["loss_total"])
            if v["loss_total"] < result.best_val:
                result.best_val, result.best_step, bad_evals = v["loss_total"], step, 0
                best_state = {k: p.detach().clone() for k, p in model.state_dict().items()}
                if ckpt:
                    save_checkpoint(ckpt, model, train_set.stats,
                                    {**meta, "step": step, "val_loss": v["loss_total"]})
            else:
                bad_evals += 1
                if cfg.patience is not None and bad_evals >= cfg.patience:
                    log.info("early stop at step %d", step)
                    break

    if best_state is not None:
        model.load_state_dict(best_state)
    model.eval()
    result.checkpoint = ckpt
    if cfg.checkpoint_dir:
        write_curve(result.curve, Path(cfg.checkpoint_dir) / "curve.csv")
    return result


LEAD_TIMES = tuple(15 * (k + 1) for k in range(6))


@dataclass
class Forecast:
    """mm/h forecast for one window: values (s_out, H, W) valid at ``timestamps``."""

    issue_time: int
    timestamps: np.ndarray
    values: np.ndarray
    window_index: int

    @property
    def lead_times(self) -> list[int]:
        return [int(t - self.issue_time) for t in self.timestamps]


def predict(model: Nowcaster, ss: SampleSet, seed: int = 0) -> list[Forecast]:
    """Full-map mm/h forecasts for every window of ``ss``."""
    torch.manual_seed(seed)
    model.eval()
    out = []
    with torch.no_grad():
        for wi, idx in window_batches(ss):
            x, s, y = ss.batch(idx)
            pred = ss.crop(model(x, s)).numpy().astype(np.float64)
            w = ss.windows[wi]
            ts = ss.raw.timestamps[list(w.target_frames)]
            issue = int(ss.raw.timestamps[w.input_frames[-1]])
            out.append(Forecast(issue, ts, ss.to_map_mm(wi, list(pred)), wi))
    return out


def persistence(ss: SampleSet) -> list[Forecast]:
    """Repeat the last observed frame (mm/h) at every lead time."""
    from .verify import persistence_baseline

    out = []
    for wi, w in enumerate(ss.windows):
        ts = ss.raw.timestamps[list(w.target_frames)]
        issue = int(ss.raw.timestamps[w.input_frames[-1]])
        out.append(Forecast(issue, ts, persistence_baseline(ss.last_input_mm(wi), len(ts)), wi))
    return out
