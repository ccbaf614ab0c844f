"""Belief-selective propagation MIMO detection and Monte Carlo BER simulation."""

from .bp import MessageGrid, run_ebrdf_bp, run_original_bp
from .bsp import BspConfig, run_bsp
from .channel import ChannelInstance, draw_instance, noise_variance_from_ebn0
from .linear import lmmse_estimate, lmmse_hard_detect, map_detect
from .modem import BitLlrOutput, Constellation, build_constellation

__version__ = "0.1.0"

__all__ = [
    "BitLlrOutput",
    "BspConfig",
    "ChannelInstance",
    "Constellation",
    "MessageGrid",
    "build_constellation",
    "draw_instance",
    "lmmse_estimate",
    "lmmse_hard_detect",
    "map_detect",
    "noise_variance_from_ebn0",
    "run_bsp",
    "run_ebrdf_bp",
    "run_original_bp",
]
