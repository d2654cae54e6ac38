"""Discrete-time survival analysis with in-training subgroup calibration."""

__version__ = "0.1.0"
