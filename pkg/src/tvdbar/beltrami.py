"""Complex geometric optics solutions of the plane Beltrami equation.

For a real Beltrami coefficient ``mu`` supported in the unit disc, the CGO
solutions ``f(z, k) = exp(ikz) M(z, k)`` of ``dbar f = mu conj(d f)`` are
found by writing ``M = 1 + P v`` with ``P`` the Cauchy transform and
``v = dbar M``.  Substituting gives the real-linear equation on the support
of ``mu``::

    v - mu e_{-k} conj(S v) + i conj(k) mu e_{-k} conj(P v) = -i conj(k) mu e_{-k}

where ``S`` is the Beurling transform and ``e_{-k}(z) = exp(-2i Re(kz))``.
``P`` and ``S`` are applied as periodized FFT convolutions with kernels
truncated at radius 2 (see :mod:`tvdbar.convolution`), which requires the
z-grid half width to be at least 2.

The scattering transform follows from the area integral
``conj(tau(k)) = (1 / 2 pi) int (v_plus - v_minus) dA``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .convolution import beurling_multiplier, cauchy_multiplier, fft2, ifft2
from .grids import KGrid, ZGrid
from .krylov import real_gmres
from .scattering import ScatteringField

logger = logging.getLogger(__name__)

KERNEL_RADIUS = 2.0


class BeltramiError(RuntimeError):
    pass


@dataclass
class PlaneCgoSolution:
    """``dbar M`` on the support of ``mu`` for one ``k`` and both signs."""

    k: complex
    v_plus: np.ndarray = field(repr=False)
    v_minus: np.ndarray = field(repr=False)
    solver: "BeltramiSolver" = field(repr=False)

    def M(self, sign: int = 1) -> np.ndarray:
        """``M_{+-mu}`` on the closed unit disc points of the z-grid."""
        return self.solver.interior(self.v_plus if sign > 0 else self.v_minus)

    def boundary(self, z: np.ndarray, sign: int = 1) -> np.ndarray:
        """``M_{+-mu}`` at points outside the support (e.g. ``|z| = 1``)."""
        return self.solver.exterior(self.v_plus if sign > 0 else self.v_minus, z)


class BeltramiSolver:
    """Batched CGO solver for one Beltrami coefficient on one z-grid."""

    def __init__(self, mu: np.ndarray, grid: ZGrid, tol: float = 1e-6,
                 restart: int = 40, maxiter: int = 600, batch: int = 32):
        mu = np.asarray(mu, dtype=float)
        if mu.shape != grid.shape:
            raise ValueError("mu must live on the z-grid")
        if grid.s < KERNEL_RADIUS:
            raise ValueError(f"z-grid half width {grid.s} < {KERNEL_RADIUS}; periodization would alias")
        if np.max(np.abs(mu)) >= 1:
            raise ValueError("Beltrami coefficient must satisfy sup|mu| < 1")
        if np.any(mu[~grid.disc_mask] != 0):
            raise ValueError("Beltrami coefficient must vanish outside the unit disc")
        self.grid = grid
        self.tol, self.restart, self.maxiter, self.batch = tol, restart, maxiter, batch
        self.support = mu != 0
        self.mu = mu[self.support]
        self.z = grid.points[self.support]
        self._P = cauchy_multiplier(grid.n, grid.h, KERNEL_RADIUS)
        self._S = beurling_multiplier(grid.n, grid.h, KERNEL_RADIUS)
        self.iterations: list[int] = []

    @property
    def trivial(self) -> bool:
        return self.mu.size == 0

    def _spread(self, v: np.ndarray) -> np.ndarray:
        full = np.zeros((v.shape[0],) + self.grid.shape, dtype=complex)
        full[:, self.support] = v
        return fft2(full)

    def _apply_ps(self, v: np.ndarray):
        F = self._spread(v)
        Pv = ifft2(F * self._P)[:, self.support]
        Sv = ifft2(F * self._S)[:, self.support]
        return Pv, Sv

    def solve(self, ks, sign: int = 1) -> np.ndarray:
        """``v = dbar M_{sign mu}`` for every ``k`` in ``ks``; shape
        ``(len(ks), n_support)``."""
        ks = np.atleast_1d(np.asarray(ks, dtype=complex))
        out = np.zeros((ks.size, self.mu.size), dtype=complex)
        if self.trivial:
            return out
        for start in range(0, ks.size, self.batch):
            kb = ks[start:start + self.batch]
            a = (sign * self.mu)[None, :] * np.exp(-2j * (kb[:, None] * self.z[None, :]).real)
            ck = np.conj(kb)[:, None]

            def apply(v):
                Pv, Sv = self._apply_ps(v)
                return v - a * np.conj(Sv) + 1j * ck * a * np.conj(Pv)

            rhs = -1j * ck * a
            v, info = real_gmres(apply, rhs, tol=self.tol, restart=self.restart,
                                 maxiter=self.maxiter)
            self.iterations.append(info.iterations)
            if not np.all(info.converged):
                bad = kb[~info.converged]
                raise BeltramiError(
                    f"Beltrami solve did not converge for k={bad[0]:.4g} after "
                    f"{info.iterations} iterations (residual {info.residuals.max():.2e})")
            out[start:start + kb.size] = v
        return out

    def solution(self, k: complex) -> PlaneCgoSolution:
        vp = self.solve([k], 1)[0]
        vm = self.solve([k], -1)[0]
        return PlaneCgoSolution(complex(k), vp, vm, self)

    def interior(self, v: np.ndarray) -> np.ndarray:
        """``M = 1 + P v`` on the closed unit disc grid points."""
        v = np.atleast_2d(v)
        F = self._spread(v)
        Pv = ifft2(F * self._P)[:, self.grid.disc_mask]
        out = 1.0 + Pv
        return out[0] if out.shape[0] == 1 else out

    def exterior(self, v: np.ndarray, z: np.ndarray) -> np.ndarray:
        """``M = 1 + P v`` by direct quadrature at points away from the support."""
        z = np.asarray(z, dtype=complex)
        w = self.grid.h ** 2 / np.pi
        return 1.0 + w * (v[None, :] / (z.ravel()[:, None] - self.z[None, :])).sum(axis=1).reshape(z.shape)

    def tau(self, ks) -> np.ndarray:
        """Scattering transform at each ``k`` via the area integral."""
        ks = np.atleast_1d(np.asarray(ks, dtype=complex))
        if self.trivial:
            return np.zeros(ks.shape, complex)
        vp = self.solve(ks, 1)
        vm = self.solve(ks, -1)
        conj_tau = self.grid.h ** 2 / (2 * np.pi) * (vp - vm).sum(axis=1)
        return np.conj(conj_tau)


def solve_beltrami(mu: np.ndarray, grid: ZGrid, k: complex, **kw) -> PlaneCgoSolution:
    return BeltramiSolver(mu, grid, **kw).solution(k)


def scattering_from_mu(mu: np.ndarray, grid: ZGrid, kgrid: KGrid,
                       mask: np.ndarray | None = None, **kw) -> ScatteringField:
    """Scattering transform of ``mu`` on the points of ``kgrid`` selected by
    ``mask`` (default: ``|k| < R_tilde``), swept in order of increasing ``|k|``."""
    mask = kgrid.mask_Rtilde if mask is None else np.asarray(mask, bool)
    solver = BeltramiSolver(mu, grid, **kw)
    ks = kgrid.points[mask]
    order = np.argsort(np.abs(ks), kind="stable")
    vals = np.zeros(ks.shape, complex)
    vals[order] = solver.tau(ks[order])
    tau = np.zeros(kgrid.shape, complex)
    tau[mask] = vals
    tau[kgrid.origin] = 0.0
    return ScatteringField(kgrid, tau, mask.copy())
