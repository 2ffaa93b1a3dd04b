"""Simulation and analysis toolkit for quantum-dot single-photon sources."""

__version__ = "0.1.0"
