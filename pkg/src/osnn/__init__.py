"""Optical subspace neural network simulator and training toolkit."""

__version__ = "0.1.0"
