"""SNR maximization for an AF relay aided by a hybrid active/passive IRS."""

from .channel import ChannelSet, Geometry, draw_channels
from .model import HybridConfig, ReflectionState, check_feasible, rate, snr_direct
from .optimizer import OptimizerOptions, optimize

__all__ = [
    "ChannelSet",
    "Geometry",
    "draw_channels",
    "HybridConfig",
    "ReflectionState",
    "check_feasible",
    "rate",
    "snr_direct",
    "OptimizerOptions",
    "optimize",
]

__version__ = "0.1.0"
