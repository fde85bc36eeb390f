"""Hybrid quantum-classical operator learning for Legendre-Galerkin spectral systems."""

__version__ = "0.1.0"
