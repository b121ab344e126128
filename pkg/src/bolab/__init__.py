"""Benjamin-Ono pseudospectral solver and harmonic-analysis toolkit."""

__version__ = "0.1.0"
