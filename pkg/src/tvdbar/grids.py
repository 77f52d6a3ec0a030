"""Spatial (z) and spectral (k) grids shared by all solvers.

Both grids are square, half-open and equispaced: ``2**ell`` points per axis
covering ``[-s, s)``.  Arrays are stored row-major with ``y`` as the slow
(outer) index, so ``points[iy, ix] = x[ix] + 1j * x[iy]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _axis(n: int, half_width: float) -> np.ndarray:
    h = 2.0 * half_width / n
    return -half_width + h * np.arange(n)


@dataclass(frozen=True)
class ZGrid:
    """Square z-grid containing the closed unit disc."""

    ell: int
    s: float
    points: np.ndarray = field(repr=False)
    disc_mask: np.ndarray = field(repr=False)
    disc_index: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return 2 ** self.ell

    @property
    def h(self) -> float:
        return 2.0 * self.s / self.n

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    @property
    def disc_points(self) -> np.ndarray:
        return self.points[self.disc_mask]

    def scatter(self, values: np.ndarray, fill: complex = 0.0) -> np.ndarray:
        """Place compact disc values back onto the full grid."""
        values = np.asarray(values)
        out = np.full(self.shape, fill, dtype=np.result_type(values, type(fill)))
        out[self.disc_mask] = values
        return out

    def header(self) -> dict:
        return {"ell": self.ell, "s": self.s}


@dataclass(frozen=True)
class KGrid:
    """Square k-grid on ``[-R_tilde, R_tilde)`` with the radius masks used by
    the truncation and blending steps."""

    m: int
    R: float
    R_tilde: float
    points: np.ndarray = field(repr=False)
    mask_R: np.ndarray = field(repr=False)
    mask_Rtilde: np.ndarray = field(repr=False)
    mask_annulus: np.ndarray = field(repr=False)
    origin: tuple[int, int] = (0, 0)

    @property
    def n(self) -> int:
        return 2 ** self.m

    @property
    def h(self) -> float:
        return 2.0 * self.R_tilde / self.n

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    def disc_mask(self, radius: float) -> np.ndarray:
        """Points with ``|k| < radius``."""
        return np.abs(self.points) < radius

    def header(self) -> dict:
        return {"m": self.m, "R": self.R, "R_tilde": self.R_tilde}


def make_zgrid(ell: int, s: float) -> ZGrid:
    """Build the ``2**ell x 2**ell`` grid on ``[-s, s)^2``.

    The disc mask is the closed disc ``|z| <= 1``; ``disc_index`` holds the
    compact index of each masked point (``-1`` elsewhere).
    """
    if int(ell) != ell or ell < 4:
        raise ValueError(f"ell must be an integer >= 4, got {ell}")
    if not s > 1:
        raise ValueError(f"half width s={s} does not contain the closed unit disc")
    ell = int(ell)
    x = _axis(2 ** ell, float(s))
    points = x[None, :] + 1j * x[:, None]
    disc_mask = np.abs(points) <= 1.0
    disc_index = np.full(points.shape, -1, dtype=np.int64)
    disc_index[disc_mask] = np.arange(int(disc_mask.sum()))
    for arr in (points, disc_mask, disc_index):
        arr.setflags(write=False)
    return ZGrid(ell, float(s), points, disc_mask, disc_index)


def make_kgrid(m: int, R: float, R_tilde: float) -> KGrid:
    """Build the ``2**m x 2**m`` k-grid on ``[-R_tilde, R_tilde)^2``.

    ``mask_R`` is ``|k| < R``, ``mask_Rtilde`` is ``|k| < R_tilde`` and the
    annulus is ``R - 1 <= |k| < R_tilde``.  The grid always contains ``k = 0``
    (at ``origin``), where the scattering data vanish.
    """
    if int(m) != m or m < 2:
        raise ValueError(f"m must be an integer >= 2, got {m}")
    if not R > 1:
        raise ValueError(f"R={R} must exceed 1 (blending uses R-1 < |k| < R)")
    if not R_tilde > R:
        raise ValueError(f"R_tilde={R_tilde} must exceed R={R}")
    m = int(m)
    x = _axis(2 ** m, float(R_tilde))
    points = x[None, :] + 1j * x[:, None]
    r = np.abs(points)
    mask_R = r < R
    mask_Rtilde = r < R_tilde
    mask_annulus = mask_Rtilde & ~(r < R - 1)
    for arr in (points, mask_R, mask_Rtilde, mask_annulus):
        arr.setflags(write=False)
    c = 2 ** (m - 1)
    return KGrid(m, float(R), float(R_tilde), points, mask_R, mask_Rtilde,
                 mask_annulus, origin=(c, c))
