"""Stochastic video generation with a learned prior (SVG-LP).

Per-frame encoder: the U-net encoder blocks 1-4 followed by a full-extent
convolution (kernel spatial/16) + batch norm + tanh giving a vector h. The
decoder opens with a matching transposed convolution from the predictor
output g back to a spatial/16 map, then runs the U-net decoder stages with
skips taken from the last observed frame.

Recurrent parts: predictor (2-layer LSTM), posterior q(z | x_t) and learned
prior p(z | x_{t-1}) (1-layer LSTMs emitting mean and log-variance), each
with a linear embedding and a linear output layer.
"""

from __future__ import annotations

import torch
from torch import nn

from .common import ModelConfig, Nowcaster, leaky
from .unet import ENC_WIDTHS, Decoder, Encoder


class LSTMStack(nn.Module):
    def __init__(self, n_in, n_out, cells, layers):
        super().__init__()
        self.embed = nn.Linear(n_in, cells)
        self.cells = nn.ModuleList([nn.LSTMCell(cells, cells) for _ in range(layers)])
        self.out = nn.Linear(cells, n_out)
        self.n_cells = cells

    def init_state(self, batch, like):
        z = like.new_zeros(batch, self.n_cells)
        return [(z, z) for _ in self.cells]

    def forward(self, x, state):
        h = self.embed(x)
        new = []
        for cell, s in zip(self.cells, state):
            hc = cell(h, s)
            new.append(hc)
            h = hc[0]
        return self.out(h), new


class GaussianLSTM(LSTMStack):
    def __init__(self, n_in, n_z, cells):
        super().__init__(n_in, 2 * n_z, cells, 1)

    def forward(self, x, state):
        out, state = super().forward(x, state)
        mu, logvar = out.chunk(2, dim=1)
        return mu, logvar, state


def gaussian_kl(mu_q, logvar_q, mu_p, logvar_p) -> torch.Tensor:
    """KL(q || p) for diagonal Gaussians, summed over the last dimension."""
    return 0.5 * (
        logvar_p - logvar_q + (logvar_q.exp() + (mu_q - mu_p) ** 2) / logvar_p.exp() - 1
    ).sum(-1)


class FrameEncoder(nn.Module):
    def __init__(self, c_in, cfg: ModelConfig):
        super().__init__()
        self.body = Encoder(c_in, cfg)
        side = cfg.spatial // 16
        h = cfg.latent_dims["h"]
        self.squeeze = nn.Sequential(
            nn.Conv2d(self.body.out_channels, h, side), nn.BatchNorm2d(h), nn.Tanh()
        )

    def forward(self, x):
        bottom, skips = self.body(x)
        return self.squeeze(bottom).flatten(1), skips


class FrameDecoder(nn.Module):
    def __init__(self, skip_channels, cfg: ModelConfig):
        super().__init__()
        side = cfg.spatial // 16
        c = cfg.width(ENC_WIDTHS[4])
        self.expand = nn.Sequential(
            nn.ConvTranspose2d(cfg.latent_dims["g"], c, side), nn.BatchNorm2d(c), leaky(cfg)
        )
        self.body = Decoder(c, skip_channels, cfg)
        self.head = nn.Conv2d(self.body.out_channels, 1, 1)

    def forward(self, g, skips):
        return self.head(self.body(self.expand(g[:, :, None, None]), skips))


class SVGLP(Nowcaster):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.config = cfg
        dims = cfg.latent_dims
        c_frame = cfg.in_channels + cfg.static_channels
        self.encoder = FrameEncoder(c_frame, cfg)
        self.decoder = FrameDecoder(self.encoder.body.skip_channels, cfg)
        self.predictor = LSTMStack(dims["h"] + dims["mu"], dims["g"], cfg.lstm_cells, 2)
        self.posterior = GaussianLSTM(dims["h"], dims["mu"], cfg.lstm_cells)
        self.prior = GaussianLSTM(dims["h"], dims["mu"], cfg.lstm_cells)
        self.sample_latent = True
        self._kl = None

    def _frames(self, x, static, future=None):
        """Frame tensors (B, C, H, W): observed frames, then teacher-forced
        future frames with the last observed auxiliary channels held."""
        frames = [torch.cat([x[:, t], static], dim=1) for t in range(x.shape[1])]
        if future is not None:
            aux = x[:, -1, 1:]
            for t in range(future.shape[1]):
                frames.append(torch.cat([future[:, t : t + 1], aux, static], dim=1))
        return frames

    def _z(self, mu, logvar, sample):
        if not sample:
            return mu
        return mu + torch.randn_like(mu) * (0.5 * logvar).exp()

    def forward(self, x, static, target=None):
        if target is not None and self.training:
            return self._reconstruct(x, static, target)
        return self.generate(x, static, sample=self.sample_latent)

    def _reconstruct(self, x, static, target):
        """Teacher-forced pass with posterior latents; stores the KL term."""
        frames = self._frames(x, static, target)
        B, n_past = x.shape[0], x.shape[1]
        T = len(frames)
        h_all, skips_all = self.encoder(torch.cat(frames, dim=0))
        hs = h_all.split(B)
        skip = [s.split(B)[n_past - 1] for s in skips_all]
        pred_state = self.predictor.init_state(B, h_all)
        post_state = self.posterior.init_state(B, h_all)
        prior_state = self.prior.init_state(B, h_all)
        out, kl = [], 0.0
        for t in range(1, T):
            mu_q, lv_q, post_state = self.posterior(hs[t], post_state)
            mu_p, lv_p, prior_state = self.prior(hs[t - 1], prior_state)
            z = self._z(mu_q, lv_q, True)
            g, pred_state = self.predictor(torch.cat([hs[t - 1], z], dim=1), pred_state)
            kl = kl + gaussian_kl(mu_q, lv_q, mu_p, lv_p)
            if t >= n_past:
                out.append(self.decoder(g, skip))
        self._kl = (kl / (T - 1)).mean()
        return torch.cat(out, dim=1)

    def generate(self, x, static, sample: bool = True):
        """Condition on the observed frames, then roll out on own predictions."""
        self._kl = None
        B, n_past = x.shape[0], x.shape[1]
        frames = self._frames(x, static)
        aux = x[:, -1, 1:]
        pred_state = self.predictor.init_state(B, x)
        post_state = self.posterior.init_state(B, x)
        prior_state = self.prior.init_state(B, x)
        h_prev, skips = self.encoder(frames[0])
        skip = skips
        out = []
        for t in range(1, n_past + self.config.out_frames):
            mu_p, lv_p, prior_state = self.prior(h_prev, prior_state)
            if t < n_past:
                h_t, skips_t = self.encoder(frames[t])
                mu_q, lv_q, post_state = self.posterior(h_t, post_state)
                z = self._z(mu_q, lv_q, sample)
            else:
                z = self._z(mu_p, lv_p, sample)
            g, pred_state = self.predictor(torch.cat([h_prev, z], dim=1), pred_state)
            if t < n_past:
                h_prev, skip = h_t, skips_t
            else:
                frame = self.decoder(g, skip)
                out.append(frame)
                if len(out) < self.config.out_frames:
                    h_prev, _ = self.encoder(torch.cat([frame, aux, static], dim=1))
        return torch.cat(out, dim=1)

    def extra_loss(self) -> torch.Tensor:
        if self._kl is None:
            return torch.zeros(())
        return self.config.kl_weight * self._kl

    @property
    def last_kl(self):
        return self._kl


def build_svglp(cfg: ModelConfig) -> SVGLP:
    if cfg.kind != "svglp":
        raise ValueError(f"expected kind 'svglp', got {cfg.kind!r}")
    torch.manual_seed(cfg.seed)
    return SVGLP(cfg)
