from __future__ import annotations

from dataclasses import asdict, dataclass, field

import torch
from torch import nn

KINDS = ("unet", "convlstm", "svglp")


class NonFiniteError(FloatingPointError):
    pass


@dataclass
class ModelConfig:
    kind: str = "unet"
    in_frames: int = 6
    out_frames: int = 6
    in_channels: int = 5
    """Dynamic channels per input frame (precipitation + one-hot profile type)."""
    static_channels: int = 1
    """Static maps appended once (relief)."""
    base_width: float = 1.0
    spatial: int = 256
    latent_dims: dict = field(default_factory=lambda: {"h": 512, "g": 512, "mu": 256})
    lstm_cells: int = 256
    leaky_slope: float = 0.2
    kl_weight: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; choose from {KINDS}")
        if self.spatial % 16:
            raise ValueError(f"spatial={self.spatial} must be divisible by 16")
        if self.base_width <= 0:
            raise ValueError("base_width must be > 0")
        if self.in_frames < 1 or self.out_frames < 1:
            raise ValueError("frame counts must be >= 1")
        self.latent_dims = {"h": 512, "g": 512, "mu": 256, **dict(self.latent_dims)}

    def width(self, n: int) -> int:
        return max(1, int(round(n * self.base_width)))

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


class Nowcaster(nn.Module):
    """Maps (x, static) to future precipitation frames.

    x: (B, in_frames, in_channels, H, W); static: (B, static_channels, H, W);
    returns (B, out_frames, H, W). Channel 0 of x is precipitation.
    """

    config: ModelConfig

    def extra_loss(self) -> torch.Tensor:
        """Model-specific training term from the last forward call (zero by default)."""
        return torch.zeros(())


def leaky(cfg: ModelConfig) -> nn.LeakyReLU:
    return nn.LeakyReLU(cfg.leaky_slope)


def penalized_parameters(model: nn.Module):
    """Weight tensors subject to the L2 penalty: convolution, linear and
    recurrent weights. Biases and normalization affine terms are left out."""
    for module in model.modules():
        if isinstance(module, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
            yield module.weight
        elif isinstance(module, (nn.LSTMCell, nn.LSTM)):
            for name, p in module.named_parameters(recurse=False):
                if name.startswith("weight"):
                    yield p


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def check_finite(model: nn.Module, *args, **kwargs):
    """Run a forward pass that raises NonFiniteError naming the first layer
    whose output is not finite."""
    handles = []

    def hook(name):
        def fn(_module, _inputs, output):
            outs = output if isinstance(output, (tuple, list)) else (output,)
            for o in outs:
                if isinstance(o, torch.Tensor) and o.is_floating_point() and not torch.isfinite(o).all():
                    raise NonFiniteError(f"non-finite activations in layer {name or type(_module).__name__}")
        return fn

    for name, module in model.named_modules():
        handles.append(module.register_forward_hook(hook(name)))
    try:
        return model(*args, **kwargs)
    finally:
        for h in handles:
            h.remove()
