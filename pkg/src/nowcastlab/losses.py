"""SSIM, reference-weighted SSIM, rain-weighted MSE and the combined objective.

All functions take tensors of shape (..., H, W); leading dimensions are
flattened into a batch of images, each image is scored on its own and the
scores are averaged. ``X`` is always the reference (ground truth) and ``Y``
the prediction.

SSIM uses the luminance term times the merged contrast-structure term

    cs = (2 sigma_xy + C2) / (sigma_x^2 + sigma_y^2 + C2)

which equals c * s exactly when C3 = C2 / 2 and avoids square roots of
variances, so gradients stay finite on flat windows.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterable, NamedTuple

import torch


@dataclass
class LossConfig:
    alpha: float = 0.84
    beta: float = 1e-3
    T: float = 0.1
    wmse_rain_weight: float = 3.0
    k1: float = 0.01
    k2: float = 0.03
    L: float = 1.0
    window: int = 11
    window_sigma: float | None = 1.5
    """Gaussian window std; None gives a uniform window."""
    weighted_ssim: bool = True
    """False falls back to the uniform mean over windows."""

    def __post_init__(self):
        if not 0 <= self.alpha <= 1:
            raise ValueError("alpha must lie in [0, 1]")
        if self.beta < 0 or self.T < 0:
            raise ValueError("beta and T must be >= 0")
        if self.k1 <= 0 or self.k2 <= 0 or self.L <= 0:
            raise ValueError("k1, k2 and L must be > 0")
        if self.window < 1:
            raise ValueError("window must be >= 1")

    @property
    def C1(self) -> float:
        return (self.k1 * self.L) ** 2

    @property
    def C2(self) -> float:
        return (self.k2 * self.L) ** 2

    @property
    def C3(self) -> float:
        return self.C2 / 2

    def to_dict(self):
        return asdict(self)

    @classmethod
    def preset(cls, name: str, **overrides) -> "LossConfig":
        """Named loss variants: mse, wmse, ssim, wssim, wssim_wmse."""
        presets = {
            "mse": dict(alpha=0.0, wmse_rain_weight=1.0),
            "wmse": dict(alpha=0.0),
            "ssim": dict(alpha=1.0, weighted_ssim=False),
            "wssim": dict(alpha=1.0),
            "wssim_wmse": dict(),
        }
        if name not in presets:
            raise ValueError(f"unknown loss preset {name!r}; choose from {sorted(presets)}")
        return cls(**{**presets[name], **overrides})


def window_profile(cfg: LossConfig, dtype=torch.float64) -> torch.Tensor:
    """Normalized 1-D window weights; the 2-D window is their outer product."""
    n = cfg.window
    if cfg.window_sigma is None:
        g = torch.ones(n, dtype=torch.float64)
    else:
        ax = torch.arange(n, dtype=torch.float64) - (n - 1) / 2
        g = torch.exp(-0.5 * (ax / cfg.window_sigma) ** 2)
    return (g / g.sum()).to(dtype)


def _as_images(t) -> torch.Tensor:
    t = torch.as_tensor(t)
    if not t.is_floating_point():
        t = t.to(torch.float64)
    if t.dim() < 2:
        raise ValueError("expected at least 2-D images")
    return t.reshape(-1, 1, *t.shape[-2:])


def _pair(X, Y, cfg: LossConfig):
    X, Y = _as_images(X), _as_images(Y)
    if X.shape != Y.shape:
        raise ValueError(f"shape mismatch: {tuple(X.shape)} vs {tuple(Y.shape)}")
    dtype = torch.promote_types(X.dtype, Y.dtype)
    X, Y = X.to(dtype), Y.to(dtype)
    if X.shape[-1] < cfg.window or X.shape[-2] < cfg.window:
        raise ValueError(f"image {tuple(X.shape[-2:])} smaller than the {cfg.window}x{cfg.window} window")
    return X, Y


@dataclass
class WindowStats:
    """Per-window means, standard deviations and covariance, shape (N, Hv, Wv)."""

    mu_x: torch.Tensor
    mu_y: torch.Tensor
    sigma_x: torch.Tensor
    sigma_y: torch.Tensor
    sigma_xy: torch.Tensor


def _band(g: torch.Tensor, n_in: int) -> torch.Tensor:
    """(n_in - len(g) + 1, n_in) matrix applying the 1-D window at every valid offset."""
    k = len(g)
    B = g.new_zeros(n_in - k + 1, n_in)
    for i in range(n_in - k + 1):
        B[i, i : i + k] = g
    return B


def _moments(X, Y, cfg):
    # The window is separable, so valid filtering of all five maps is two
    # banded matrix products: rows, then columns.
    g = window_profile(cfg, X.dtype).to(X.device)
    R, C = _band(g, X.shape[-2]), _band(g, X.shape[-1])
    n = len(X)
    stack = torch.cat([X, Y, X * X, Y * Y, X * Y])[:, 0]
    out = R @ stack @ C.T
    mu_x, mu_y, xx, yy, xy = out.split(n)
    var_x = xx - mu_x * mu_x
    var_y = yy - mu_y * mu_y
    cov = xy - mu_x * mu_y
    return mu_x, mu_y, var_x, var_y, cov


def window_stats(X, Y, cfg: LossConfig) -> WindowStats:
    X, Y = _pair(X, Y, cfg)
    mu_x, mu_y, var_x, var_y, cov = _moments(X, Y, cfg)
    return WindowStats(
        mu_x, mu_y, var_x.clamp_min(0).sqrt(), var_y.clamp_min(0).sqrt(), cov
    )


def ssim_map(X, Y, cfg: LossConfig) -> torch.Tensor:
    """SSIM of every valid (stride-1) window, shape (N, Hv, Wv)."""
    X, Y = _pair(X, Y, cfg)
    mu_x, mu_y, var_x, var_y, cov = _moments(X, Y, cfg)
    lum = (2 * mu_x * mu_y + cfg.C1) / (mu_x * mu_x + mu_y * mu_y + cfg.C1)
    cs = (2 * cov + cfg.C2) / (var_x + var_y + cfg.C2)
    return lum * cs


def ssim_window(x_j, y_j, cfg: LossConfig) -> torch.Tensor:
    """SSIM of a single window pair of side ``cfg.window``."""
    x_j, y_j = torch.as_tensor(x_j), torch.as_tensor(y_j)
    if x_j.shape != y_j.shape:
        raise ValueError(f"shape mismatch: {tuple(x_j.shape)} vs {tuple(y_j.shape)}")
    if tuple(x_j.shape) != (cfg.window, cfg.window):
        raise ValueError(f"windows must be {cfg.window}x{cfg.window}")
    return ssim_map(x_j, y_j, cfg).reshape(())


def reference_window_std(X, cfg: LossConfig) -> torch.Tensor:
    """Per-window standard deviation of the reference, (N, Hv, Wv).

    Computed in float64; windows whose cells are all equal are set to
    exactly zero rather than a rounding residue. No gradient flows through it.
    """
    X = _as_images(X).detach().to(torch.float64)
    g = window_profile(cfg, X.dtype).to(X.device)
    R, C = _band(g, X.shape[-2]), _band(g, X.shape[-1])
    img = X[:, 0]
    mu = R @ img @ C.T
    var = (R @ (img * img) @ C.T - mu * mu).clamp_min(0)
    # A window is flat when no neighbouring pair inside it differs.
    n = cfg.window
    if n == 1:
        return torch.zeros_like(var)
    H, W = img.shape[-2:]
    box = lambda size, length: _band(img.new_ones(length), size)  # noqa: E731
    dr = (img[:, 1:] != img[:, :-1]).to(img.dtype)
    dc = (img[:, :, 1:] != img[:, :, :-1]).to(img.dtype)
    steps = box(H - 1, n - 1) @ dr @ box(W, n).T + box(H, n) @ dc @ box(W - 1, n - 1).T
    return torch.where(steps == 0, torch.zeros_like(var), var.sqrt())


def mean_ssim(X, Y, cfg: LossConfig) -> torch.Tensor:
    return ssim_map(X, Y, cfg).flatten(1).mean(1).mean()


def wssim_weights(X, cfg: LossConfig) -> torch.Tensor:
    """Window weights (1 + sigma_x) / sum(1 + sigma_x) for each image."""
    v = 1 + reference_window_std(X, cfg).flatten(1)
    return v / v.sum(1, keepdim=True)


def weighted_ssim(X, Y, cfg: LossConfig) -> torch.Tensor:
    s = ssim_map(X, Y, cfg).flatten(1)
    v = (1 + reference_window_std(X, cfg).flatten(1)).to(s.dtype)
    return ((v * s).sum(1) / v.sum(1)).mean()


def wssim_loss(X, Y, cfg: LossConfig) -> torch.Tensor:
    if cfg.weighted_ssim:
        return 1 - weighted_ssim(X, Y, cfg)
    return 1 - mean_ssim(X, Y, cfg)


def weighted_mse(X, Y, cfg: LossConfig) -> torch.Tensor:
    """Squared error weighted 1 where the reference is below T, else the rain weight,
    normalized by the weight total of each image."""
    X, Y = _as_images(X), _as_images(Y)
    if X.shape != Y.shape:
        raise ValueError(f"shape mismatch: {tuple(X.shape)} vs {tuple(Y.shape)}")
    X = X.to(Y.dtype) if Y.is_floating_point() else X
    w = torch.where(X < cfg.T, torch.ones_like(X), torch.full_like(X, cfg.wmse_rain_weight)).detach()
    num = (w * (X - Y) ** 2).flatten(1).sum(1)
    return (num / w.flatten(1).sum(1)).mean()


def l2_penalty(params: Iterable[torch.Tensor]) -> torch.Tensor:
    total = None
    for p in params:
        term = (p * p).sum()
        total = term if total is None else total + term
    return torch.zeros(()) if total is None else total


class LossTerms(NamedTuple):
    total: torch.Tensor
    wssim: torch.Tensor
    wmse: torch.Tensor
    penalty: torch.Tensor


def loss_terms(X, Y, params, cfg: LossConfig) -> LossTerms:
    """Components of the training objective, averaged over all frames."""
    if cfg.alpha > 0:
        ls = wssim_loss(X, Y, cfg)
    else:
        with torch.no_grad():  # reported only
            ls = wssim_loss(X, Y, cfg)
    lm = weighted_mse(X, Y, cfg)
    pen = l2_penalty(params) if cfg.beta > 0 else torch.zeros((), dtype=lm.dtype)
    total = cfg.alpha * ls + (1 - cfg.alpha) * lm + cfg.beta * pen
    return LossTerms(total, ls, lm, pen)


def total_loss(X, Y, params=(), cfg: LossConfig | None = None) -> torch.Tensor:
    return loss_terms(X, Y, params, cfg or LossConfig()).total

