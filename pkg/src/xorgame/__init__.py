"""Simulation and analysis of the superposition-verification XOR game."""

__version__ = "0.1.0"
