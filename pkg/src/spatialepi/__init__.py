"""Stochastic spatial epidemic models: exact simulators and moment-closure solvers."""

__version__ = "0.1.0"
