"""ConvLSTM encoder-forecaster.

Encoder: three (stride-2 4x4 conv + leaky ReLU, ConvLSTM) stages with 64,
192, 192 filters. Forecaster: ConvLSTMs with 192, 192, 64 filters, each
followed by a stride-2 4x4 transposed conv + leaky ReLU, then a 3x3 conv +
leaky ReLU and a 1x1 head. Forecaster layer i starts from the final state of
the encoder layer at the same resolution; its first layer has no input and
runs on its own recurrence.
"""

from __future__ import annotations

import torch
from torch import nn

from .common import ModelConfig, Nowcaster, leaky

ENC_FILTERS = (64, 192, 192)
DEC_FILTERS = (192, 192, 64)


class ConvLSTMCell(nn.Module):
    def __init__(self, c_in, hidden, kernel=3):
        super().__init__()
        self.hidden = hidden
        self.gates = nn.Conv2d(c_in + hidden, 4 * hidden, kernel, padding=kernel // 2)

    def forward(self, x, state):
        h, c = state
        z = h if x is None else torch.cat([x, h], dim=1)
        i, f, o, g = self.gates(z).chunk(4, dim=1)
        c = torch.sigmoid(f) * c + torch.sigmoid(i) * torch.tanh(g)
        h = torch.sigmoid(o) * torch.tanh(c)
        return h, c


class ConvLSTMNet(Nowcaster):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.config = cfg
        enc = [cfg.width(f) for f in ENC_FILTERS]
        dec = [cfg.width(f) for f in DEC_FILTERS]
        c_in = cfg.in_channels + cfg.static_channels
        self.down = nn.ModuleList()
        self.enc_cells = nn.ModuleList()
        for f in enc:
            self.down.append(nn.Sequential(nn.Conv2d(c_in, f, 4, stride=2, padding=1), leaky(cfg)))
            self.enc_cells.append(ConvLSTMCell(f, f))
            c_in = f
        self.dec_cells = nn.ModuleList()
        self.up = nn.ModuleList()
        ups_out = dec[1:] + [dec[-1]]
        prev = 0
        for f, u in zip(dec, ups_out):
            self.dec_cells.append(ConvLSTMCell(prev, f))
            self.up.append(nn.Sequential(nn.ConvTranspose2d(f, u, 4, stride=2, padding=1), leaky(cfg)))
            prev = u
        self.refine = nn.Sequential(nn.Conv2d(prev, dec[-1], 3, padding=1), leaky(cfg))
        self.head = nn.Conv2d(dec[-1], 1, 1)
        # encoder layer feeding forecaster layer i (same resolution and width)
        self.handoff = (2, 1, 0)
        if [enc[j] for j in self.handoff] != dec:
            raise ValueError("encoder and forecaster widths must mirror each other")

    def encode(self, x, static):
        """Run the encoder over all input frames; final (h, c) per layer."""
        B, T, _, H, W = x.shape
        states = []
        for i, cell in enumerate(self.enc_cells):
            s = H >> (i + 1)
            zeros = x.new_zeros(B, cell.hidden, s, W >> (i + 1))
            states.append((zeros, zeros))
        for t in range(T):
            z = torch.cat([x[:, t], static], dim=1)
            for i, (down, cell) in enumerate(zip(self.down, self.enc_cells)):
                z = down(z)
                states[i] = cell(z, states[i])
                z = states[i][0]
        return states

    def decode(self, states, steps: int):
        states = [states[j] for j in self.handoff]
        out = []
        for _ in range(steps):
            z = None
            for i, (cell, up) in enumerate(zip(self.dec_cells, self.up)):
                states[i] = cell(z, states[i])
                z = up(states[i][0])
            out.append(self.head(self.refine(z)))
        return torch.cat(out, dim=1)

    def forward(self, x, static, target=None):
        return self.decode(self.encode(x, static), self.config.out_frames)


def build_convlstm(cfg: ModelConfig) -> ConvLSTMNet:
    if cfg.kind != "convlstm":
        raise ValueError(f"expected kind 'convlstm', got {cfg.kind!r}")
    torch.manual_seed(cfg.seed)
    return ConvLSTMNet(cfg)
