"""Simulation of the self-interacting walk in Z^3 and its embedded martingale."""

__version__ = "0.1.0"
