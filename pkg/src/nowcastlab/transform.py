"""Value transforms: log(x + 1) compression, z-scores, one-hot categories."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def log1p_forward(x):
    x = np.asarray(x)
    if np.any(x < 0):
        raise ValueError("precipitation must be non-negative")
    return np.log1p(x)


def log1p_inverse(y):
    return np.expm1(np.asarray(y))


@dataclass
class NormStats:
    """Per-channel mean and population standard deviation."""

    mean: dict[str, float] = field(default_factory=dict)
    stdev: dict[str, float] = field(default_factory=dict)

    def to_dict(self):
        return {"mean": dict(self.mean), "stdev": dict(self.stdev)}

    @classmethod
    def from_dict(cls, d):
        return cls({k: float(v) for k, v in d["mean"].items()}, {k: float(v) for k, v in d["stdev"].items()})


def fit_norm_stats(arrays: dict[str, np.ndarray]) -> NormStats:
    """Statistics of each channel's (already log-transformed) training values."""
    stats = NormStats()
    for name, arr in arrays.items():
        a = np.asarray(arr, dtype=np.float64)
        mean = float(a.mean())
        std = float(np.sqrt(np.mean((a - mean) ** 2)))
        if std == 0:
            raise ValueError(f"channel {name!r} has zero variance and cannot be standardized")
        stats.mean[name] = mean
        stats.stdev[name] = std
    return stats


def zscore(x, stats: NormStats, channel: str):
    sd = stats.stdev[channel]
    if sd == 0:
        raise ValueError(f"channel {channel!r} has zero stdev")
    return (np.asarray(x, dtype=np.float64) - stats.mean[channel]) / sd


def zscore_inverse(z, stats: NormStats, channel: str):
    return np.asarray(z, dtype=np.float64) * stats.stdev[channel] + stats.mean[channel]


def precip_forward(x, stats: NormStats, channel: str = "precip_mm_per_h"):
    """mm/h -> standardized log space."""
    return zscore(log1p_forward(x), stats, channel)


def precip_inverse(z, stats: NormStats, channel: str = "precip_mm_per_h"):
    """Standardized log space -> mm/h, clamped at zero."""
    return np.maximum(log1p_inverse(zscore_inverse(z, stats, channel)), 0.0)


def one_hot(codes, n_classes: int) -> np.ndarray:
    """Categorical codes (..., H, W) -> (..., n_classes, H, W) float32."""
    codes = np.asarray(codes)
    idx = np.rint(codes).astype(np.int64)
    if np.any(idx < 0) or np.any(idx >= n_classes) or not np.allclose(codes, idx):
        raise ValueError(f"category codes must be integers in [0, {n_classes})")
    out = (idx[..., None, :, :] == np.arange(n_classes)[:, None, None]).astype(np.float32)
    return out
