"""Driven-dissipative cavity coupled to a multilevel transmon: mean-field,
master-equation, trajectory, phase-space and Fokker-Planck tools."""

__version__ = "0.1.0"

from .hilbert import HilbertSpec  # noqa: E402
from .models import SystemParams, device_preset, ratio_params  # noqa: E402

__all__ = ["HilbertSpec", "SystemParams", "device_preset", "ratio_params", "__version__"]
