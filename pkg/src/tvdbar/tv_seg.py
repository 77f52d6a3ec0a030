"""Multi-label piecewise-constant segmentation with (weighted) total variation.

The relaxed model is

    min_{u in S} sum_k  int g |grad u_k| + int u_k f_k,     f_k = lam/2 (sigma0 - c_k)^2

over label functions ``u = (u_1..u_K)`` in the pointwise probability simplex
``S``.  For fixed means ``c`` it is solved with the first-order primal-dual
iteration (dual ascent on ``p``, projected primal descent on ``u``,
over-relaxation), then ``u`` is binarized and the means are refit.  The two
steps alternate until the means settle.

Images are compared in gray levels: ``sigma0`` is mapped affinely so its
range on the disc spans 255 units before the data term is formed, and the TV
term is measured in pixels.  This makes ``lam`` independent of the
conductivity scale and of the grid resolution.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.ndimage import gaussian_filter

from .phantoms import ConductivityImage

logger = logging.getLogger(__name__)

GRAY_RANGE = 255.0


@dataclass
class LabelField:
    """Label channels ``u`` with shape ``(K, ny, nx)`` on the disc bounding box,
    region means ``c`` and the parameters used."""

    K: int
    u: np.ndarray = field(repr=False)
    c: np.ndarray
    lam: float
    g: np.ndarray = field(repr=False)
    outer_iterations: int = 0
    inner_iterations: list = field(default_factory=list)
    energies: list = field(default_factory=list)
    max_simplex_violation: float = 0.0
    max_dual_violation: float = 0.0


@dataclass
class Segmentation:
    labels: LabelField
    image: ConductivityImage


# -- building blocks ---------------------------------------------------------

def kmeans_init(image: ConductivityImage, K: int, seed: int = 0) -> np.ndarray:
    """Ascending k-means centres of the disc values (k-means++ seeding)."""
    if K < 2:
        raise ValueError("K must be at least 2")
    vals = np.asarray(image.disc_values, dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ValueError("image contains non-finite values")
    if np.unique(vals).size < K:
        raise ValueError(f"image has fewer than K={K} distinct values")
    for attempt in range(10):
        rng = np.random.default_rng(seed + attempt)
        c, _ = kmeans2(vals[:, None], K, iter=50, minit="++", rng=rng, missing="warn")
        c = np.sort(c[:, 0])
        if np.all(np.diff(c) > 0):
            return c
    raise ValueError("k-means did not find K distinct centres")


def edge_weight(image: ConductivityImage | np.ndarray, s_param: float = 0.0,
                smoothing: float = 2.0) -> np.ndarray:
    """``g = 1 / (1 + s |grad G * sigma|^2)`` with a Gaussian of width
    ``smoothing`` pixels and central differences in pixel units."""
    if s_param < 0 or smoothing < 0:
        raise ValueError("s_param and smoothing must be nonnegative")
    v = image.values if isinstance(image, ConductivityImage) else np.asarray(image, float)
    if s_param == 0:
        return np.ones(v.shape)
    sm = gaussian_filter(v, smoothing, mode="nearest") if smoothing > 0 else v
    gy, gx = np.gradient(sm)
    return 1.0 / (1.0 + s_param * (gx * gx + gy * gy))


def project_simplex(u: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex along axis 0."""
    u = np.asarray(u, dtype=float)
    K = u.shape[0]
    srt = -np.sort(-u, axis=0)
    css = np.cumsum(srt, axis=0) - 1.0
    idx = np.arange(1, K + 1).reshape((K,) + (1,) * (u.ndim - 1))
    cond = srt - css / idx > 0
    rho = K - 1 - np.argmax(cond[::-1], axis=0)
    theta = np.take_along_axis(css, rho[None], axis=0)[0] / (rho + 1)
    return np.maximum(u - theta, 0.0)


def project_dual(p: np.ndarray, g) -> np.ndarray:
    """Radial projection of 2-vectors on axis -3 (``(..., 2, ny, nx)``) or the
    last axis for a plain 2-vector, onto the ball of radius ``g``."""
    p = np.asarray(p, dtype=float)
    if p.ndim == 1:
        n = np.hypot(p[0], p[1])
        return p if n <= g else p * (g / n)
    n = np.hypot(p[..., 0, :, :], p[..., 1, :, :])
    scale = np.minimum(1.0, g / np.maximum(n, 1e-300))
    return p * scale[..., None, :, :]


def gradient(u: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Forward differences on ``(..., ny, nx)`` with Neumann conditions at the
    mask boundary; returns ``(..., 2, ny, nx)`` with x then y components."""
    gx = np.zeros_like(u)
    gy = np.zeros_like(u)
    mx = mask[:, 1:] & mask[:, :-1]
    my = mask[1:, :] & mask[:-1, :]
    gx[..., :, :-1] = np.where(mx, u[..., :, 1:] - u[..., :, :-1], 0.0)
    gy[..., :-1, :] = np.where(my, u[..., 1:, :] - u[..., :-1, :], 0.0)
    return np.stack([gx, gy], axis=-3)


def divergence(p: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Negative adjoint of :func:`gradient`."""
    mx = np.zeros(mask.shape, bool)
    my = np.zeros(mask.shape, bool)
    mx[:, :-1] = mask[:, 1:] & mask[:, :-1]
    my[:-1, :] = mask[1:, :] & mask[:-1, :]
    px = np.where(mx, p[..., 0, :, :], 0.0)
    py = np.where(my, p[..., 1, :, :], 0.0)
    d = px.copy()
    d[..., :, 1:] -= px[..., :, :-1]
    d += py
    d[..., 1:, :] -= py[..., :-1, :]
    return d


def _tv(u: np.ndarray, g: np.ndarray, mask: np.ndarray) -> float:
    gr = gradient(u, mask)
    return float((g * np.hypot(gr[..., 0, :, :], gr[..., 1, :, :])).sum())


# -- solver --------------------------------------------------------------------

def _bbox(mask: np.ndarray):
    rows = np.nonzero(mask.any(axis=1))[0]
    cols = np.nonzero(mask.any(axis=0))[0]
    return slice(rows[0], rows[-1] + 1), slice(cols[0], cols[-1] + 1)


def _one_hot(labels: np.ndarray, K: int) -> np.ndarray:
    return (labels[None] == np.arange(K).reshape(K, 1, 1)).astype(float)


def segment(image: ConductivityImage, K: int = 4, lam: float = 0.1, s_param: float = 0.0,
            seed: int = 0, max_outer: int = 20, max_inner: int = 2000, tol: float = 1e-5,
            c_tol: float = 1e-4, smoothing: float = 2.0, c_init=None,
            check_feasibility: bool = False) -> Segmentation:
    """Segment the disc part of ``image`` into ``K`` constant regions.

    Parameters
    ----------
    image : ConductivityImage
        Smooth input (typically a D-bar reconstruction).
    K : int
        Number of regions.
    lam : float
        Data weight; larger values follow the input more closely.
    s_param : float
        Edge-weight strength; 0 gives plain TV.
    seed : int
        Seed for the k-means initialization.
    max_outer, max_inner : int
        Iteration caps for the mean refits and the primal-dual loop.
    tol : float
        Inner stop on ``||u_new - u|| / ||u||``.
    c_tol : float
        Outer stop on ``max |c_new - c|`` (conductivity units).
    c_init : array_like, optional
        Initial means; k-means is used when omitted.
    check_feasibility : bool
        Track the worst simplex and dual-ball violation over all iterates.

    Returns
    -------
    Segmentation
        Label field and the piecewise-constant image ``sum_k u_k c_k``
        (background 1 outside the disc).
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    vals = np.asarray(image.values, dtype=float)
    if not np.all(np.isfinite(vals[image.grid.disc_mask])):
        raise ValueError("image contains non-finite values")
    c = np.sort(np.asarray(c_init, float)) if c_init is not None else kmeans_init(image, K, seed)
    if c.size != K:
        raise ValueError("c_init must have K entries")

    sl = _bbox(image.grid.disc_mask)
    mask = image.grid.disc_mask[sl]
    f0 = vals[sl]
    dvals = f0[mask]
    lo, hi = float(dvals.min()), float(dvals.max())
    gamma = GRAY_RANGE / (hi - lo) if hi > lo else 1.0
    g = edge_weight(vals, s_param, smoothing)[sl]
    g = np.where(mask, g, 0.0)

    t1 = t2 = 1.0 / np.sqrt(8.0)
    labels = np.argmin(np.abs(f0[None] - c.reshape(K, 1, 1)), axis=0)
    u = _one_hot(labels, K)
    p = np.zeros((K, 2) + mask.shape)
    out = LabelField(K, u, c.copy(), float(lam), g)
    prev_energy = np.inf

    for outer in range(max_outer):
        f = 0.5 * lam * (gamma * (f0[None] - c.reshape(K, 1, 1))) ** 2
        f = np.where(mask[None], f, 0.0)
        ubar = u.copy()
        it = 0
        for it in range(1, max_inner + 1):
            p = project_dual(p + t1 * gradient(ubar, mask), g)
            u_new = project_simplex(u + t2 * (divergence(p, mask) - f))
            if check_feasibility:
                sv = max(np.abs(u_new.sum(axis=0) - 1).max(), -min(u_new.min(), 0.0),
                         max(u_new.max() - 1, 0.0))
                dv = max((np.hypot(p[:, 0], p[:, 1]) - g[None]).max(), 0.0)
                out.max_simplex_violation = max(out.max_simplex_violation, float(sv))
                out.max_dual_violation = max(out.max_dual_violation, float(dv))
            change = np.linalg.norm(u_new - u) / max(np.linalg.norm(u), 1e-300)
            ubar = 2 * u_new - u
            u = u_new
            if change < tol:
                break
        out.inner_iterations.append(it)

        labels = np.argmax(u, axis=0)
        u_bin = _one_hot(labels, K) * mask[None]
        energy = _tv(u_bin, g, mask) + float((u_bin * f).sum())
        if energy > prev_energy * (1 + 1e-6):
            logger.info("segmentation energy rose from %.6g to %.6g", prev_energy, energy)
        prev_energy = energy
        out.energies.append(energy)

        c_new = c.copy()
        for k in range(K):
            sel = mask & (labels == k)
            if sel.any():
                c_new[k] = f0[sel].mean()
        shift = np.abs(c_new - c).max()
        c = c_new
        out.outer_iterations = outer + 1
        if shift < c_tol:
            break

    labels = np.argmax(u, axis=0)
    u_bin = _one_hot(labels, K) * mask[None]
    out.u, out.c = u_bin, c
    piece = np.ones(image.grid.shape)
    box = piece[sl]
    box[mask] = c[labels[mask]]
    return Segmentation(out, ConductivityImage(image.grid, piece, 1.0))
