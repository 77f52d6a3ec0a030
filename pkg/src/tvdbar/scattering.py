"""Scattering data on a k-grid."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .grids import KGrid


@dataclass(frozen=True)
class ScatteringField:
    """Beltrami scattering transform ``tau(k)`` on ``kgrid``.

    ``valid`` flags points where ``tau`` was computed; elsewhere it is 0.
    The Schrodinger-type transform is ``t(k) = -4 pi i conj(k) tau(k)``.
    """

    kgrid: KGrid
    tau: np.ndarray = field(repr=False)
    valid: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.tau.shape != self.kgrid.shape or self.valid.shape != self.kgrid.shape:
            raise ValueError("scattering arrays must match the k-grid shape")

    @property
    def t(self) -> np.ndarray:
        return -4j * np.pi * np.conj(self.kgrid.points) * self.tau

    @classmethod
    def zeros(cls, kgrid: KGrid) -> "ScatteringField":
        return cls(kgrid, np.zeros(kgrid.shape, complex), np.zeros(kgrid.shape, bool))

    @classmethod
    def from_t(cls, kgrid: KGrid, t: np.ndarray, valid: np.ndarray) -> "ScatteringField":
        k = kgrid.points
        tau = np.zeros(kgrid.shape, complex)
        nz = k != 0
        tau[nz] = t[nz] / (-4j * np.pi * np.conj(k[nz]))
        return cls(kgrid, np.where(valid, tau, 0), np.asarray(valid, bool))

    def truncated(self, radius: float) -> "ScatteringField":
        """Zero the data on ``|k| >= radius``."""
        keep = self.kgrid.disc_mask(radius)
        return replace(self, tau=np.where(keep, self.tau, 0), valid=self.valid & keep)

    def header(self) -> dict:
        return {**self.kgrid.header(), "convention": "tau"}
