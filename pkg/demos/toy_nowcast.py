"""
Train a toy nowcaster and compare it with persistence
=====================================================

A width-reduced U-net on a 64x64 synthetic scene with steady advection.
Pass the number of steps as the first argument (default 300).
"""

import logging
import sys
from pathlib import Path

from nowcastlab.losses import LossConfig
from nowcastlab.models import ModelConfig, build_model
from nowcastlab.partition import build_split
from nowcastlab.samples import RawData, SampleSet, ViewSpec, fit_stats
from nowcastlab.synthgen import SceneConfig, generate_scene
from nowcastlab.trainer import TrainConfig, persistence, predict, train
from nowcastlab.verify import plot_scores, score_run

logging.basicConfig(level=logging.INFO, format="%(message)s")
steps = int(sys.argv[1]) if len(sys.argv) > 1 else 300
out = Path(sys.argv[2] if len(sys.argv) > 2 else "demo_output")

raw = RawData.from_sequences(generate_scene(SceneConfig(velocity=(1.5, 1.0), frame_count=564)))
plan = build_split(len(raw), k=47, seed=0)
print(f"{len(raw)} frames -> {plan.n_sequences} block-sequences, {plan.discarded} frames dropped")

stats = fit_stats(raw, plan)  # training frames only
train_set, val_set, test_set = (SampleSet(raw, plan, s, ViewSpec("full", 64), stats) for s in ("train", "val", "test"))

model = build_model(ModelConfig(kind="unet", base_width=0.125, spatial=64))
result = train(model, train_set, val_set, LossConfig(),
               TrainConfig(max_steps=steps, eval_interval=50, checkpoint_dir=str(out / "toy_run")))
print(f"best validation loss {result.best_val:.4f} at step {result.best_step}")

forecasts = predict(result.model, test_set)
truth = [test_set.truth_mm(f.window_index) for f in forecasts]
model_scores = score_run([f.values for f in forecasts], truth)
base_scores = score_run([f.values for f in persistence(test_set)], truth)

print("lead  MAE model  MAE persistence  F1@1 model  F1@1 persistence")
for a, b in zip(model_scores.rows, base_scores.rows):
    print(f"+{a.lead_time_min:<4d} {a.mae:9.3f}  {b.mae:15.3f}  {a.f1_at[1.0]:10.3f}  {b.f1_at[1.0]:16.3f}")
plot_scores({"u-net": model_scores, "persistence": base_scores}, out / "toy_figures")
