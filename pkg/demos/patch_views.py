"""
Ring patches versus plain crops
===============================

A 64-cell model input around a 32-cell target tile. The plain crop sees
16 cells of context on each side; the ring patch squeezes 40 cells into the
same margin by averaging ever wider source bands into each outer ring.
"""

import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from nowcastlab import patchwork as pw
from nowcastlab.synthgen import SceneConfig, generate_scene

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_output")
out.mkdir(parents=True, exist_ok=True)

# one frame of a fast-moving 128x128 scene
scene = generate_scene(SceneConfig(seed=4, n_cells=14, velocity=(4.0, 3.0), frame_count=40, rows=128, cols=128))
frame = scene["precip_mm_per_h"].values[30].astype(np.float64)

spec = pw.PatchSpec(isize=64, tsize=32, step=1, freq=4)
print("ring schedule (offset, width):", pw.ring_schedule(spec)[:8], "...")
print("context per side: naive", spec.margin, "cells, ring patch", pw.source_reach(spec), "cells")

tile = pw.tile_grid(frame.shape, spec.tsize)[5]
origin = pw.patch_origin(tile, spec)
patch = pw.extract_patch(frame, spec, origin)
crop = pw.naive_patch(np.pad(frame, 64), spec, (origin[0] + 64, origin[1] + 64))

# the centre is an exact copy in both views
assert np.array_equal(patch.values[16:48, 16:48], crop[16:48, 16:48])

fig, axes = plt.subplots(1, 3, figsize=(12, 4))
axes[0].imshow(frame, cmap="Blues", vmax=10)
r, c = tile.row * 32, tile.col * 32
axes[0].add_patch(plt.Rectangle((c - 0.5, r - 0.5), 32, 32, fill=False, color="red"))
axes[0].set_title("map and target tile")
axes[1].imshow(crop, cmap="Blues", vmax=10)
axes[1].set_title("plain crop")
axes[2].imshow(patch.values, cmap="Blues", vmax=10)
axes[2].set_title("ring patch")
for ax in axes[1:]:
    ax.add_patch(plt.Rectangle((15.5, 15.5), 32, 32, fill=False, color="red"))
fig.tight_layout()
fig.savefig(out / "patch_views.png", dpi=90)
print("wrote", out / "patch_views.png")
