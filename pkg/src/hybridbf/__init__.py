"""Hybrid analog/digital beamforming design for active antenna arrays."""

__version__ = "0.1.0"
