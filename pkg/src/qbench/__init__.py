"""Simulation and benchmarking toolkit for noisy quantum gates."""

__version__ = "0.1.0"
