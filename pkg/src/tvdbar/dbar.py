"""D-bar inversion from truncated scattering data.

For each ``z`` the function ``m(z, .)`` solves

    m(k) = 1 + (2 pi)^{-2} int t(kappa) / ((k - kappa) conj(kappa)) e(-z, kappa) conj(m(kappa)) dkappa

with ``e(z, k) = exp(2i Re(kz))``.  Since ``t / conj(kappa) = -4 pi i tau`` this is

    m = 1 - i P[tau e(-z, .) conj(m)]

with ``P`` the Cauchy transform in the k-plane.  The density lives on
``|kappa| < cutoff`` and ``m`` is only needed there, so ``P`` is applied as a
periodized FFT convolution with the kernel truncated at ``2 * cutoff``.  That is
exact as long as the periodic box has half width at least ``2 * cutoff``; the
k-grid is zero-padded (same spacing) when it is smaller.
"""
from __future__ import annotations

import logging

import numpy as np

from .convolution import cauchy_multiplier, fft2, ifft2
from .grids import ZGrid
from .krylov import real_gmres
from .phantoms import ConductivityImage
from .scattering import ScatteringField

logger = logging.getLogger(__name__)


class DbarError(RuntimeError):
    pass


class DbarSolver:
    """Precomputed operators for one truncated scattering field."""

    def __init__(self, scat: ScatteringField, cutoff: float, tol: float = 1e-6,
                 restart: int = 30, maxiter: int = 300, batch: int = 64):
        kg = scat.kgrid
        if cutoff > kg.R_tilde + 1e-12:
            raise ValueError(f"cutoff {cutoff} exceeds the k-grid radius {kg.R_tilde}")
        tau = np.asarray(scat.tau)
        if not np.all(np.isfinite(tau)):
            raise ValueError("scattering data contain non-finite values")
        self.cutoff = float(cutoff)
        self.tol, self.restart, self.maxiter, self.batch = tol, restart, maxiter, batch
        self.support = kg.disc_mask(cutoff)
        self.k = kg.points[self.support]
        self.tau = tau[self.support]
        self.tau[self.k == 0] = 0.0
        # pad so the periodic box half width is at least 2 * cutoff
        n, h = kg.n, kg.h
        while n * h / 2 < 2 * self.cutoff - 1e-12:
            n *= 2
        self.n = n
        off = (n - kg.n) // 2
        iy, ix = np.nonzero(self.support)
        self._iy, self._ix = iy + off, ix + off
        self._P = cauchy_multiplier(n, h, 2 * self.cutoff)
        self._h2 = h * h
        hit = np.nonzero(self.k == 0)[0]
        if hit.size != 1:
            raise DbarError("k-grid does not contain the origin")
        self._origin = int(hit[0])
        self.iterations: list[int] = []

    @property
    def trivial(self) -> bool:
        return not np.any(self.tau != 0)

    def _cauchy(self, f: np.ndarray) -> np.ndarray:
        full = np.zeros((f.shape[0], self.n, self.n), dtype=complex)
        full[:, self._iy, self._ix] = f
        return ifft2(fft2(full) * self._P)[:, self._iy, self._ix]

    def solve(self, z: np.ndarray) -> np.ndarray:
        """``m(z, 0)`` for every point of ``z`` (1-D array)."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        out = np.ones(z.size, dtype=complex)
        if self.trivial:
            return out
        for start in range(0, z.size, self.batch):
            zb = z[start:start + self.batch]
            a = self.tau[None, :] * np.exp(-2j * (zb[:, None] * self.k[None, :]).real)

            def apply(m):
                return m + 1j * self._cauchy(a * np.conj(m))

            rhs = np.ones((zb.size, self.k.size), dtype=complex)
            m, info = real_gmres(apply, rhs, x0=rhs, tol=self.tol,
                                 restart=self.restart, maxiter=self.maxiter)
            self.iterations.append(info.iterations)
            if not np.all(info.converged):
                bad = zb[~info.converged][0]
                raise DbarError(
                    f"D-bar solve did not converge at z={bad:.4g} (cutoff {self.cutoff}, "
                    f"residual {info.residuals.max():.2e})")
            out[start:start + zb.size] = m[:, self._origin]
        return out


def solve_dbar(scat: ScatteringField, z, cutoff: float, **kw) -> np.ndarray:
    """``m_R(z, 0)`` at the given points, using data on ``|k| < cutoff``."""
    return DbarSolver(scat, cutoff, **kw).solve(z)


def reconstruct_sigma(scat: ScatteringField, zgrid: ZGrid, cutoff: float,
                      **kw) -> ConductivityImage:
    """``sigma_R = m_R(z, 0)^2`` on the closed-disc points; 1 elsewhere.

    The imaginary part of ``m^2`` is dropped after logging its relative size.
    """
    m0 = solve_dbar(scat, zgrid.disc_points, cutoff, **kw)
    sig = m0 ** 2
    if np.any(m0.real <= 0):
        logger.warning("m(z, 0) has nonpositive real part at %d points", int((m0.real <= 0).sum()))
    denom = np.linalg.norm(sig)
    if denom > 0:
        logger.info("D-bar imaginary residual %.3e", np.linalg.norm(sig.imag) / denom)
    values = np.ones(zgrid.shape)
    values[zgrid.disc_mask] = sig.real
    return ConductivityImage(zgrid, values, 1.0)
