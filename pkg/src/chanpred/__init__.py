"""Fading-channel prediction with online-regularized polar-complex networks."""

__version__ = "0.1.0"
