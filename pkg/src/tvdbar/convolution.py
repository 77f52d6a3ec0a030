"""Periodized convolutions with truncated Cauchy and Beurling kernels.

For a density supported in a disc of diameter ``rho``, the Cauchy transform
``(1 / (pi z)) * v`` restricted to that disc only sees the kernel on
``|z| < rho``.  Truncating the kernel there and periodizing on a box of
period at least ``2 rho`` makes the FFT convolution exact for trigonometric
densities.  The Fourier transform of the truncated kernel is closed form::

    int_{|x| < rho} exp(-i xi.x) / (pi x) dx = 2 (1 - J0(rho |xi|)) / (i xi)

with ``xi = xi_1 + i xi_2``.  Applying ``d/dz`` gives the truncated Beurling
multiplier ``conj(xi) / xi * (1 - J0(rho |xi|))``.
"""
from __future__ import annotations

import numpy as np
import scipy.fft as sfft
from scipy.special import j0


def frequencies(n: int, h: float) -> np.ndarray:
    """Complex angular frequencies ``xi[iy, ix] = xi_x[ix] + i xi_y[iy]``
    matching ``fft2`` over a row-major ``(y, x)`` grid."""
    f = 2 * np.pi * np.fft.fftfreq(n, d=h)
    return f[None, :] + 1j * f[:, None]


def cauchy_multiplier(n: int, h: float, rho: float) -> np.ndarray:
    xi = frequencies(n, h)
    a = np.abs(xi)
    out = np.zeros_like(xi)
    nz = a > 0
    out[nz] = 2.0 * (1.0 - j0(rho * a[nz])) / (1j * xi[nz])
    return out


def beurling_multiplier(n: int, h: float, rho: float) -> np.ndarray:
    xi = frequencies(n, h)
    a = np.abs(xi)
    out = np.zeros_like(xi)
    nz = a > 0
    out[nz] = np.conj(xi[nz]) / xi[nz] * (1.0 - j0(rho * a[nz]))
    return out


def fft2(a: np.ndarray) -> np.ndarray:
    return sfft.fft2(a, axes=(-2, -1))


def ifft2(a: np.ndarray) -> np.ndarray:
    return sfft.ifft2(a, axes=(-2, -1))
