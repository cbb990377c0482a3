"""U-net with a five-block encoder (2, 2, 3, 3, 3 convolutions) and a
four-stage decoder (3, 3, 2, 3 convolutions) joined by skip connections."""

from __future__ import annotations

import torch
from torch import nn

from .common import ModelConfig, Nowcaster, leaky

ENC_WIDTHS = (64, 128, 256, 512, 512)
ENC_CONVS = (2, 2, 3, 3, 3)
DEC_WIDTHS = (256, 128, 64, 64)
DEC_CONVS = (3, 3, 2, 3)


def conv_block(c_in, c_out, n_convs, cfg: ModelConfig) -> nn.Sequential:
    layers = []
    for i in range(n_convs):
        layers += [
            nn.Conv2d(c_in if i == 0 else c_out, c_out, 3, padding=1, bias=False),
            nn.BatchNorm2d(c_out),
            leaky(cfg),
        ]
    return nn.Sequential(*layers)


class Encoder(nn.Module):
    """Blocks 1-4, each followed by 2x max-pooling. Returns the pooled
    bottom features and the pre-pooling skip features (finest first)."""

    def __init__(self, c_in, cfg: ModelConfig):
        super().__init__()
        widths = [cfg.width(w) for w in ENC_WIDTHS[:4]]
        self.blocks = nn.ModuleList()
        for w, n in zip(widths, ENC_CONVS[:4]):
            self.blocks.append(conv_block(c_in, w, n, cfg))
            c_in = w
        self.pool = nn.MaxPool2d(2)
        self.out_channels = c_in
        self.skip_channels = widths

    def forward(self, x):
        skips = []
        for block in self.blocks:
            x = block(x)
            skips.append(x)
            x = self.pool(x)
        return x, skips


class Decoder(nn.Module):
    """Four upsample + concat(skip) + conv stages; ends at full resolution."""

    def __init__(self, c_in, skip_channels, cfg: ModelConfig):
        super().__init__()
        self.up = nn.Upsample(scale_factor=2, mode="nearest")
        self.blocks = nn.ModuleList()
        for w, n, s in zip(DEC_WIDTHS, DEC_CONVS, reversed(skip_channels)):
            w = cfg.width(w)
            self.blocks.append(conv_block(c_in + s, w, n, cfg))
            c_in = w
        self.out_channels = c_in

    def forward(self, x, skips):
        for block, skip in zip(self.blocks, reversed(skips)):
            x = block(torch.cat([self.up(x), skip], dim=1))
        return x


class UNet(Nowcaster):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.config = cfg
        c_in = cfg.in_frames * cfg.in_channels + cfg.static_channels
        self.encoder = Encoder(c_in, cfg)
        self.bottleneck = conv_block(self.encoder.out_channels, cfg.width(ENC_WIDTHS[4]), ENC_CONVS[4], cfg)
        self.decoder = Decoder(cfg.width(ENC_WIDTHS[4]), self.encoder.skip_channels, cfg)
        self.head = nn.Conv2d(self.decoder.out_channels, cfg.out_frames, 1)

    def forward(self, x, static, target=None):
        B, T, C, H, W = x.shape
        z = torch.cat([x.reshape(B, T * C, H, W), static], dim=1)
        bottom, skips = self.encoder(z)
        return self.head(self.decoder(self.bottleneck(bottom), skips))


def build_unet(cfg: ModelConfig) -> UNet:
    if cfg.kind != "unet":
        raise ValueError(f"expected kind 'unet', got {cfg.kind!r}")
    torch.manual_seed(cfg.seed)
    return UNet(cfg)
