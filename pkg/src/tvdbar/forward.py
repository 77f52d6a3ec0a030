"""Simulated EIT measurements on the unit disc.

Piecewise-linear finite elements on a ring-structured disc mesh solve the
Neumann problem ``div(sigma grad u) = 0``, ``sigma du/dn = phi_n`` with a
mean-free boundary trace.  Boundary responses to the trigonometric current
patterns give the Neumann-to-Dirichlet (ND) matrix; its inverse, bordered by
a zero first row and column, is the Dirichlet-to-Neumann (DN) matrix.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import Delaunay

logger = logging.getLogger(__name__)


class ForwardError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrigBasis:
    """Orthonormal trigonometric basis ``phi_1 .. phi_2N`` on the unit circle.

    ``phi_n = cos((n+1) theta / 2) / sqrt(pi)`` for odd ``n`` and
    ``sin(n theta / 2) / sqrt(pi)`` for even ``n``.
    """

    N: int = 16

    @property
    def size(self) -> int:
        return 2 * self.N

    @cached_property
    def omega(self) -> np.ndarray:
        """Angular frequency of each basis function (index 0 is ``phi_1``)."""
        n = np.arange(1, 2 * self.N + 1)
        return np.where(n % 2 == 1, (n + 1) // 2, n // 2).astype(float)

    @cached_property
    def nodes(self) -> np.ndarray:
        """``theta_m = (m - 1 - N) 2 pi / (2N + 1)``, ``m = 1 .. 2N+1``."""
        m = np.arange(1, 2 * self.N + 2)
        return (m - 1 - self.N) * 2 * np.pi / (2 * self.N + 1)

    def __call__(self, theta) -> np.ndarray:
        """Basis values, shape ``theta.shape + (2N,)``."""
        theta = np.asarray(theta, dtype=float)[..., None]
        n = np.arange(1, 2 * self.N + 1)
        return np.where(n % 2 == 1, np.cos(self.omega * theta),
                        np.sin(self.omega * theta)) / np.sqrt(np.pi)

    def tangential_derivative(self) -> np.ndarray:
        """Matrix of ``d/dtheta`` acting on basis coefficients."""
        D = np.zeros((self.size, self.size))
        for j in range(0, self.size, 2):
            w = self.omega[j]
            D[j + 1, j] = -w  # cos -> -w sin
            D[j, j + 1] = w   # sin -> w cos
        return D


@dataclass(frozen=True)
class FemMesh:
    """Conforming triangulation of a polygon inscribed in the unit disc.

    Boundary vertices sit exactly on ``|z| = 1`` at angles
    ``2 pi j / n_boundary`` and are listed in ``boundary`` in angular order.
    """

    vertices: np.ndarray = field(repr=False)
    triangles: np.ndarray = field(repr=False)
    boundary: np.ndarray = field(repr=False)
    level: int = 0

    @property
    def n_boundary(self) -> int:
        return len(self.boundary)

    @cached_property
    def boundary_angles(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.n_boundary) / self.n_boundary

    @cached_property
    def areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def centroids(self) -> np.ndarray:
        c = self.vertices[self.triangles].mean(axis=1)
        return c[:, 0] + 1j * c[:, 1]

    @cached_property
    def sample_points(self) -> np.ndarray:
        """Four interior points per triangle (centroid and three inner
        points), shape ``(n_triangles, 4)`` complex."""
        p = self.vertices[self.triangles]
        z = p[..., 0] + 1j * p[..., 1]
        pts = [z.mean(axis=1)]
        for i in range(3):
            w = np.full(3, 1 / 6)
            w[i] = 2 / 3
            pts.append(z @ w)
        return np.stack(pts, axis=1)


def make_disc_mesh(level: int = 3, n_patterns: int = 33) -> FemMesh:
    """Ring mesh with ``n_patterns * 2**level`` boundary vertices.

    Rings are evenly spaced in radius with spacing close to the boundary
    edge length, so triangles are nearly equilateral.  ``n_patterns`` makes
    the quadrature nodes ``theta_m`` boundary vertices.
    """
    if level < 0:
        raise ValueError("mesh level must be >= 0")
    nb = n_patterns * 2 ** level
    n_rings = max(2, int(round(nb / (2 * np.pi))))
    pts = [np.zeros((1, 2))]
    for i in range(1, n_rings + 1):
        r = i / n_rings
        count = nb if i == n_rings else max(6, int(round(nb * r)))
        t = 2 * np.pi * np.arange(count) / count
        if i < n_rings and i % 2:
            t = t + np.pi / count
        pts.append(np.column_stack([r * np.cos(t), r * np.sin(t)]))
    vertices = np.vstack(pts)
    tri = Delaunay(vertices).simplices.astype(np.int64)
    # drop slivers Delaunay may add along the (convex) hull
    p = vertices[tri]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    area = 0.5 * np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    tri = tri[area > 1e-14]
    boundary = np.arange(len(vertices) - nb, len(vertices))
    return FemMesh(vertices, tri, boundary, level)


def _element_conductivity(sigma, mesh: FemMesh) -> np.ndarray:
    """Per-triangle conductivity from a scalar, a per-triangle array, a
    phantom spec, an image (nearest pixel at centroids) or a callable."""
    from .phantoms import ConductivityImage, PhantomSpec

    if np.isscalar(sigma):
        vals = np.full(len(mesh.triangles), float(sigma))
    elif isinstance(sigma, ConductivityImage):
        vals = sigma.sample(mesh.centroids)
    elif isinstance(sigma, PhantomSpec):
        vals = sigma.evaluate(mesh.sample_points).mean(axis=1)
    elif callable(sigma):
        vals = np.asarray(sigma(mesh.sample_points), dtype=float).mean(axis=1)
    else:
        vals = np.asarray(sigma, dtype=float)
        if vals.shape != (len(mesh.triangles),):
            raise ValueError("per-triangle conductivity has the wrong length")
    if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
        raise ForwardError("conductivity must be finite and positive on the mesh")
    return vals


def _stiffness(mesh: FemMesh, sig: np.ndarray) -> sp.csr_matrix:
    p = mesh.vertices[mesh.triangles]
    # gradients of barycentric coordinates
    x, y = p[..., 0], p[..., 1]
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    area = mesh.areas
    local = (b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :])
    local *= (sig / (4 * area))[:, None, None]
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    n = len(mesh.vertices)
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def _boundary_load(mesh: FemMesh, current) -> np.ndarray:
    """``int current(theta) * hat_j(theta) dtheta`` for boundary hats, using
    4-point Gauss-Legendre on each boundary arc."""
    nb = mesh.n_boundary
    dt = 2 * np.pi / nb
    gx, gw = np.polynomial.legendre.leggauss(4)
    s = 0.5 * (gx + 1)  # local coordinate in [0, 1]
    theta0 = mesh.boundary_angles[:, None] + dt * s[None, :]
    vals = np.asarray(current(theta0))  # (nb, 4) or (nb, 4, ncols)
    w = 0.5 * gw * dt
    if vals.ndim == 2:
        vals = vals[..., None]
    left = np.einsum("q,jqc->jc", w * (1 - s), vals)   # hat of node j on arc j
    right = np.einsum("q,jqc->jc", w * s, vals)        # hat of node j+1 on arc j
    load = left + np.roll(right, 1, axis=0)
    return load


class NeumannSolver:
    """Factorized Neumann problem for one conductivity on one mesh."""

    def __init__(self, sigma, mesh: FemMesh):
        self.mesh = mesh
        self.element_sigma = _element_conductivity(sigma, mesh)
        K = _stiffness(mesh, self.element_sigma)
        n = len(mesh.vertices)
        c = np.zeros(n)
        c[mesh.boundary] = 2 * np.pi / mesh.n_boundary  # int hat_j dtheta
        A = sp.bmat([[K, sp.csr_matrix(c[:, None])],
                     [sp.csr_matrix(c[None, :]), None]], format="csc")
        try:
            self._lu = spla.splu(A)
        except RuntimeError as exc:  # singular factor
            raise ForwardError(f"singular stiffness matrix: {exc}") from exc
        self._A = A
        self._n = n

    def solve_load(self, load: np.ndarray) -> np.ndarray:
        """Solve for boundary loads of shape ``(n_boundary, ncols)``."""
        rhs = np.zeros((self._n + 1, load.shape[1]))
        rhs[self.mesh.boundary] = load
        u = self._lu.solve(rhs)
        if not np.all(np.isfinite(u)):
            raise ForwardError("non-finite FEM solution")
        return u[: self._n]


def solve_neumann(sigma, current, mesh: FemMesh):
    """Solve ``div(sigma grad u) = 0`` with Neumann data ``current(theta)``.

    Returns ``(u, trace)``: vertex values and the trace at boundary vertices.
    The current must integrate to zero over the circle.
    """
    theta = np.linspace(0, 2 * np.pi, 4097)[:-1]
    total = np.asarray(current(theta)).mean(axis=0) * 2 * np.pi
    scale = np.max(np.abs(current(theta))) + 1e-300
    if np.any(np.abs(total) > 1e-8 * scale * 2 * np.pi):
        raise ForwardError("Neumann data must have zero mean")
    solver = NeumannSolver(sigma, mesh)
    u = solver.solve_load(_boundary_load(mesh, current))
    u = u[:, 0] if u.shape[1] == 1 else u
    return u, u[mesh.boundary]


@dataclass(frozen=True)
class BoundaryOpMatrix:
    """ND (``2N x 2N``) or DN (``(2N+1) x (2N+1)``) matrix in the trig basis.

    For ND matrices ``node_voltages`` holds the responses at the boundary
    nodes of the mesh (columns = current patterns), ``sup_norms`` the sup norm
    of each response and ``projection`` the boundary load vectors that map a
    nodal boundary function to its basis coefficients.
    """

    kind: str
    matrix: np.ndarray = field(repr=False)
    N: int = 16
    eta: float = 0.0
    seed: int | None = None
    mesh_level: int | None = None
    node_voltages: np.ndarray | None = field(default=None, repr=False)
    sup_norms: np.ndarray | None = field(default=None, repr=False)
    projection: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        expected = 2 * self.N if self.kind == "ND" else 2 * self.N + 1
        if self.kind not in ("ND", "DN"):
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.matrix.shape != (expected, expected):
            raise ValueError(f"{self.kind} matrix must be {expected}x{expected}")

    def header(self) -> dict:
        return {"kind": self.kind, "N": self.N, "eta": self.eta, "seed": self.seed,
                "mesh_level": self.mesh_level}


def assemble_nd(sigma, basis: TrigBasis | None = None, mesh: FemMesh | None = None,
                solver: NeumannSolver | None = None) -> BoundaryOpMatrix:
    """Noiseless ND matrix ``(R)_{mn} = <R phi_n, phi_m>``.

    The pairing is the exact boundary integral of the FEM trace against
    ``phi_m`` (the Galerkin load vector), which keeps the matrix symmetric
    to rounding.
    """
    basis = basis or TrigBasis()
    mesh = mesh or make_disc_mesh(4, 2 * basis.N + 1)
    if mesh.n_boundary % (2 * basis.N + 1):
        raise ValueError("mesh boundary must contain the 2N+1 quadrature nodes")
    solver = solver or NeumannSolver(sigma, mesh)
    load = _boundary_load(mesh, basis)                     # (nb, 2N)
    u = solver.solve_load(load)[mesh.boundary]             # traces (nb, 2N)
    R = load.T @ u
    return BoundaryOpMatrix("ND", R, basis.N, 0.0, None, mesh.level, node_voltages=u,
                            sup_norms=np.abs(u).max(axis=0), projection=load)


def add_noise(nd: BoundaryOpMatrix, eta: float, seed: int) -> BoundaryOpMatrix:
    """Relative Gaussian noise on the boundary voltages.

    Column ``n`` becomes ``R phi_n + eta * N_n * ||R phi_n||_inf`` where
    ``N_n`` holds one independent standard normal draw per boundary node of
    the mesh.  The perturbed response is projected onto the basis with the
    same boundary pairing as the noiseless matrix.
    """
    if eta < 0:
        raise ValueError("noise level must be nonnegative")
    if nd.kind != "ND":
        raise ValueError("noise is added to ND data")
    if eta == 0:
        return nd
    if nd.node_voltages is None or nd.projection is None:
        raise ValueError("ND matrix carries no boundary voltages to perturb")
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(nd.node_voltages.shape)
    pert = eta * noise * nd.sup_norms[None, :]
    delta = nd.projection.T @ pert
    return replace(nd, matrix=nd.matrix + delta, eta=float(eta), seed=int(seed),
                   node_voltages=nd.node_voltages + pert)


def nd_to_dn(nd: BoundaryOpMatrix, cond_limit: float = 1e12) -> BoundaryOpMatrix:
    """Invert the ND matrix and border it with a zero first row and column."""
    if nd.kind != "ND":
        raise ValueError("expected an ND matrix")
    cond = np.linalg.cond(nd.matrix)
    if not np.isfinite(cond) or cond > cond_limit:
        raise ForwardError(f"ND matrix is numerically singular (cond={cond:.3g})")
    inv = np.linalg.inv(nd.matrix)
    size = 2 * nd.N + 1
    dn = np.zeros((size, size))
    dn[1:, 1:] = inv
    return BoundaryOpMatrix("DN", dn, nd.N, nd.eta, nd.seed, nd.mesh_level)


def dn_to_nd(dn: BoundaryOpMatrix) -> np.ndarray:
    """ND block recovered from a DN matrix (drops the zero border)."""
    return np.linalg.inv(dn.matrix[1:, 1:])


def homogeneous_dn(N: int = 16, sigma0: float = 1.0) -> BoundaryOpMatrix:
    """Exact DN matrix of a constant conductivity on the unit disc."""
    omega = TrigBasis(N).omega
    dn = np.zeros((2 * N + 1, 2 * N + 1))
    dn[1:, 1:] = np.diag(sigma0 * omega)
    return BoundaryOpMatrix("DN", dn, N)


def two_layer_dn(r0: float, sigma_in: float, N: int = 16) -> BoundaryOpMatrix:
    """Exact DN matrix of ``sigma = sigma_in`` on ``|z| < r0`` and 1 outside.

    Separation of variables gives eigenvalue
    ``w (1 + q r0^(2w)) / (1 - q r0^(2w))`` on each frequency ``w``, with
    ``q = (sigma_in - 1) / (sigma_in + 1)``.
    """
    omega = TrigBasis(N).omega
    q = (sigma_in - 1) / (sigma_in + 1)
    a = q * r0 ** (2 * omega)
    dn = np.zeros((2 * N + 1, 2 * N + 1))
    dn[1:, 1:] = np.diag(omega * (1 + a) / (1 - a))
    return BoundaryOpMatrix("DN", dn, N)


def simulate_dn(sigma, eta: float = 0.0, seed: int = 0, N: int = 16,
                mesh: FemMesh | None = None, mesh_level: int = 4) -> BoundaryOpMatrix:
    """FEM ND matrix, optional noise, then inversion to a DN matrix."""
    basis = TrigBasis(N)
    mesh = mesh or make_disc_mesh(mesh_level, 2 * N + 1)
    nd = assemble_nd(sigma, basis, mesh)
    nd = add_noise(nd, eta, seed)
    return nd_to_dn(nd)
