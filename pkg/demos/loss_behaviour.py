"""
How the training losses rank imperfect forecasts
================================================

Three forecasts of the same rain cell: a blurred copy, a shifted copy and a
copy with the peak clipped. Lower is better for every loss.
"""

import numpy as np
import torch
from scipy.ndimage import gaussian_filter, shift

from nowcastlab import losses as L
from nowcastlab.transform import log1p_forward

r, c = np.mgrid[0:48, 0:48]
truth = 12 * np.exp(-((r - 24) ** 2 + (c - 20) ** 2) / 40) + 2 * np.exp(-((r - 10) ** 2 + (c - 36) ** 2) / 15)

forecasts = {
    "perfect": truth,
    "blurred": gaussian_filter(truth, 3),
    "shifted 3 cells": shift(truth, (0, 3), order=1),
    "peak clipped": np.minimum(truth, 5),
}

mse, combined = L.LossConfig.preset("mse"), L.LossConfig()
X = torch.tensor(log1p_forward(truth))
print(f"{'forecast':>16} {'1-SSIM':>8} {'1-WSSIM':>8} {'WMSE':>8} {'MSE':>8}")
for name, f in forecasts.items():
    Y = torch.tensor(log1p_forward(f))
    row = (
        1 - L.mean_ssim(X, Y, combined).item(),
        L.wssim_loss(X, Y, combined).item(),
        L.weighted_mse(X, Y, combined).item(),
        L.weighted_mse(X, Y, mse).item(),
    )
    print(f"{name:>16} " + " ".join(f"{v:8.4f}" for v in row))

# WSSIM leans on windows where the observed field varies most
w = L.wssim_weights(X, combined).reshape(48 - 10, 48 - 10)
i, j = np.unravel_index(int(w.argmax()), w.shape)
print(f"heaviest SSIM window centred at ({i + 5}, {j + 5}), weight {w.max().item():.2e} vs uniform {1 / w.numel():.2e}")
