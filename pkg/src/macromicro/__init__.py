"""Simulation, synthesis and evaluation of a unified macro-micro interaction controller."""

__version__ = "0.1.0"
