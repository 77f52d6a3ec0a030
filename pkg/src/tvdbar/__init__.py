"""TV-enhanced D-bar reconstruction for 2-D electrical impedance tomography."""

__version__ = "0.1.0"
