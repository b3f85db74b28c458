"""Simulation and Lyapunov/small-gain verification for 1D parabolic PDEs."""

__version__ = "0.1.0"
