"""CGO boundary traces from Dirichlet-to-Neumann data.

On the unit circle a trace ``g`` belongs to a solution of the Beltrami
equation with coefficient ``mu`` iff ``Im g = H_mu(Re g) + const`` where
``H_mu = d_T^{-1} Lambda_sigma`` maps a voltage to the boundary values of
its sigma-harmonic conjugate.  Extending to complex traces by
``H_mu(a + ib) = H_mu a + i H_{-mu} b`` with ``H_{-mu} = -H_mu^{-1}``
(conductivity ``1/sigma``), the real-linear projection onto such traces is::

    P_mu g = (g + i H_mu g) / 2 + mean(g) / 2

and ``P_0`` is the projection onto nonnegative Fourier modes (traces of
functions analytic in the disc).  The CGO trace ``M(., k)`` solves

    M + 1 = (P^k_mu + P_0) M,     P^k_mu g = exp(-ikz) P_mu(exp(ikz) g)

which encodes that ``exp(ikz) M`` is a Beltrami trace and that ``M - 1``
continues analytically outside the disc and vanishes at infinity.

Traces are represented by values at ``L`` equispaced nodes
``theta_j = 2 pi j / L`` with ``L`` an odd multiple of ``2N + 1`` (so the
sinogram nodes ``theta_m`` are among them).  ``Lambda_sigma`` is known on
the first ``N`` frequencies; above that the homogeneous map ``|n|`` is used.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .forward import BoundaryOpMatrix, TrigBasis
from .grids import KGrid
from .scattering import ScatteringField

logger = logging.getLogger(__name__)


class TraceSolveError(RuntimeError):
    pass


@dataclass(frozen=True)
class CgoBoundaryTraces:
    """``M_{+mu}`` and ``M_{-mu}`` at boundary nodes for a list of ``k``;
    value arrays have shape ``(len(k), len(theta))``."""

    theta: np.ndarray = field(repr=False)
    k: np.ndarray = field(repr=False)
    M_plus: np.ndarray = field(repr=False)
    M_minus: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class Sinogram:
    """``S[m, l] = M_mu(exp(i theta_m), rho exp(i phi_l)) - 1``."""

    values: np.ndarray = field(repr=False)
    rho: float = 2.0
    N: int = 16


class BoundaryCgoSolver:
    """Precomputed boundary operators for one DN matrix."""

    def __init__(self, dn: BoundaryOpMatrix, oversample: int = 5, residual_tol: float = 1e-8):
        if dn.kind != "DN":
            raise ValueError("expected a DN matrix")
        if oversample < 1 or oversample % 2 == 0:
            raise ValueError("oversample must be an odd positive integer")
        N = dn.N
        self.N = N
        self.residual_tol = residual_tol
        L = oversample * (2 * N + 1)
        self.L = L
        self.theta = 2 * np.pi * np.arange(L) / L
        self.z = np.exp(1j * self.theta)
        basis = TrigBasis(N)
        B = basis(self.theta)                      # (L, 2N)
        D = basis.tangential_derivative()
        Dinv = np.linalg.inv(D)
        lam = dn.matrix[1:, 1:]
        lam1 = np.diag(basis.omega)
        nd = np.linalg.inv(lam)
        lam_inv_sigma = -D @ nd @ D                # DN map of 1/sigma
        proj = (2 * np.pi / L) * B.T               # node values -> coefficients

        freq = np.fft.fftfreq(L, d=1.0 / L)
        F = np.fft.fft(np.eye(L), axis=0)
        Finv = np.fft.ifft(np.eye(L), axis=0)
        H0 = np.real(Finv @ np.diag(-1j * np.sign(freq)) @ F)
        self.H = H0 + B @ Dinv @ (lam - lam1) @ proj
        self.H_minus = H0 + B @ Dinv @ (lam_inv_sigma - lam1) @ proj
        self.Q = Finv @ np.diag((freq >= 0).astype(float)) @ F
        self._mean = np.full((L, L), 1.0 / L)
        # sinogram node theta_m sits at index 5 (m - 1 - N) mod L
        self.node_index = (oversample * (np.arange(1, 2 * N + 2) - 1 - N)) % L

    def _operators(self, sign: int):
        H, Hm = (self.H, self.H_minus) if sign > 0 else (self.H_minus, self.H)
        I = np.eye(self.L)
        C = 0.5 * (I + self._mean) + 0.25j * (H + Hm)
        Dc = 0.25j * (H - Hm)
        return C, Dc

    def traces(self, ks, sign: int = 1) -> np.ndarray:
        """Trace values at the ``L`` nodes, shape ``(len(ks), L)``."""
        ks = np.atleast_1d(np.asarray(ks, dtype=complex))
        C, Dc = self._operators(sign)
        L = self.L
        out = np.empty((ks.size, L), dtype=complex)
        I = np.eye(L)
        for i, k in enumerate(ks):
            E = np.exp(1j * k * self.z)
            Einv = 1.0 / E
            X = I - Einv[:, None] * C * E[None, :] - self.Q
            Y = -Einv[:, None] * Dc * np.conj(E)[None, :]
            A = np.block([[np.real(X + Y), -np.imag(X - Y)],
                          [np.imag(X + Y), np.real(X - Y)]])
            rhs = np.concatenate([-np.ones(L), np.zeros(L)])
            try:
                sol = np.linalg.solve(A, rhs)
            except np.linalg.LinAlgError as exc:
                raise TraceSolveError(f"singular trace system at k={k:.4g}") from exc
            res = np.linalg.norm(A @ sol - rhs) / np.linalg.norm(rhs)
            if not np.isfinite(res) or res > self.residual_tol:
                raise TraceSolveError(f"trace residual {res:.2e} at k={k:.4g}")
            out[i] = sol[:L] + 1j * sol[L:]
        return out

    def a1(self, traces: np.ndarray) -> np.ndarray:
        """Coefficient of ``1/z`` (the ``exp(-i theta)`` mode) of each trace."""
        return (traces * self.z[None, :]).mean(axis=1)

    def tau(self, ks) -> np.ndarray:
        ap = self.a1(self.traces(ks, 1))
        am = self.a1(self.traces(ks, -1))
        return 0.5 * (np.conj(ap) - np.conj(am))


def solve_boundary_traces(dn: BoundaryOpMatrix, k, solver: BoundaryCgoSolver | None = None
                          ) -> CgoBoundaryTraces:
    """CGO traces at the ``2N + 1`` nodes ``theta_m`` for each ``k``."""
    solver = solver or BoundaryCgoSolver(dn)
    ks = np.atleast_1d(np.asarray(k, dtype=complex))
    idx = solver.node_index
    return CgoBoundaryTraces(TrigBasis(dn.N).nodes, ks,
                             solver.traces(ks, 1)[:, idx], solver.traces(ks, -1)[:, idx])


def extract_tau(dn: BoundaryOpMatrix, kgrid: KGrid, R: float,
                solver: BoundaryCgoSolver | None = None) -> ScatteringField:
    """``tau_R(k) = (conj(a1+) - conj(a1-)) / 2`` for grid points ``|k| < R``,
    zero elsewhere and at ``k = 0``."""
    solver = solver or BoundaryCgoSolver(dn)
    mask = kgrid.disc_mask(R)
    ks = kgrid.points[mask]
    order = np.argsort(np.abs(ks), kind="stable")
    vals = np.zeros(ks.shape, complex)
    vals[order] = solver.tau(ks[order])
    tau = np.zeros(kgrid.shape, complex)
    tau[mask] = vals
    tau[kgrid.origin] = 0.0
    return ScatteringField(kgrid, tau, mask)


def build_sinogram(dn: BoundaryOpMatrix, rho: float = 2.0,
                   solver: BoundaryCgoSolver | None = None) -> Sinogram:
    """``(2N+1) x (2N+1)`` CGO sinogram of ``M_{+mu}`` with ``k = rho exp(i phi_l)``
    and ``phi_l = theta_l``; rows index ``theta_m``, columns ``phi_l``."""
    solver = solver or BoundaryCgoSolver(dn)
    phi = TrigBasis(dn.N).nodes
    ks = rho * np.exp(1j * phi)
    tr = solver.traces(ks, 1)[:, solver.node_index]      # (l, m)
    return Sinogram(tr.T - 1.0, float(rho), dn.N)


def sinogram_discrepancy(a: Sinogram, b: Sinogram) -> float:
    """Relative ``L2`` distance ``||a - b|| / ||b||`` on the torus (uniform
    quadrature weights cancel)."""
    if a.values.shape != b.values.shape:
        raise ValueError("sinogram shapes differ")
    if a.rho != b.rho:
        raise ValueError("sinograms computed at different radii")
    denom = np.linalg.norm(b.values)
    if denom == 0:
        raise ValueError("reference sinogram is identically zero")
    return float(np.linalg.norm(a.values - b.values) / denom)
