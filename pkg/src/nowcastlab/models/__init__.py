"""The three forecasting architectures and a kind-dispatching builder."""

from .common import (
    KINDS,
    ModelConfig,
    NonFiniteError,
    Nowcaster,
    check_finite,
    count_parameters,
    penalized_parameters,
)
from .convlstm import ConvLSTMNet, build_convlstm
from .svglp import SVGLP, build_svglp, gaussian_kl
from .unet import UNet, build_unet

_BUILDERS = {"unet": build_unet, "convlstm": build_convlstm, "svglp": build_svglp}


def build_model(cfg: ModelConfig) -> Nowcaster:
    return _BUILDERS[cfg.kind](cfg)


__all__ = [
    "KINDS",
    "ModelConfig",
    "NonFiniteError",
    "Nowcaster",
    "UNet",
    "ConvLSTMNet",
    "SVGLP",
    "build_model",
    "build_unet",
    "build_convlstm",
    "build_svglp",
    "check_finite",
    "count_parameters",
    "gaussian_kl",
    "penalized_parameters",
]
