"""Batched GMRES for real-linear equations stored as complex vectors.

The Beltrami and D-bar equations contain complex conjugation, so the
operators are linear over the reals only.  GMRES still applies if vectors in
``C^n`` are treated as vectors in ``R^{2n}``; the only change is the inner
product ``Re <x, y>``.  A batch of independent systems (one per ``k`` or per
``z``) is advanced in lockstep so FFTs can be stacked.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class KrylovInfo:
    iterations: int
    residuals: np.ndarray
    converged: np.ndarray


def _rdot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.einsum("bn,bn->b", a.real, b.real) + np.einsum("bn,bn->b", a.imag, b.imag)


def _norm(a: np.ndarray) -> np.ndarray:
    return np.sqrt(_rdot(a, a))


def real_gmres(apply, b: np.ndarray, x0: np.ndarray | None = None, tol: float = 1e-6,
               restart: int = 40, maxiter: int = 400):
    """Solve ``apply(x) = b`` for a batch of real-linear systems.

    Parameters
    ----------
    apply : callable
        Maps a ``(B, n)`` complex array to a ``(B, n)`` complex array; must be
        real-linear in each row.
    b : ndarray, shape (B, n)
    x0 : ndarray, optional
        Initial guess.
    tol : float
        Relative residual target ``||b - A x|| / ||b||`` for every row.
    restart, maxiter : int
        Krylov dimension per cycle and total iteration cap.

    Returns
    -------
    x : ndarray, shape (B, n)
    info : KrylovInfo
        True relative residuals after the final cycle.
    """
    b = np.asarray(b, dtype=complex)
    if b.ndim != 2:
        raise ValueError("b must have shape (batch, n)")
    nbatch, n = b.shape
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=complex)
    bnorm = _norm(b)
    bnorm[bnorm == 0] = 1.0
    total = 0
    while True:
        r = b - apply(x)
        beta = _norm(r)
        rel = beta / bnorm
        if np.all(rel < tol) or total >= maxiter:
            break
        m = min(restart, maxiter - total)
        V = np.zeros((m + 1, nbatch, n), dtype=complex)
        H = np.zeros((nbatch, m + 1, m))
        cs = np.zeros((nbatch, m))
        sn = np.zeros((nbatch, m))
        g = np.zeros((nbatch, m + 1))
        g[:, 0] = beta
        safe = np.where(beta > 0, beta, 1.0)
        V[0] = np.where((beta > 0)[:, None], r / safe[:, None], 0)
        done = rel < tol
        used = 0
        for j in range(m):
            w = np.array(apply(V[j]), dtype=complex)  # never alias the basis
            for i in range(j + 1):  # modified Gram-Schmidt
                hij = _rdot(V[i], w)
                H[:, i, j] = hij
                w -= hij[:, None] * V[i]
            hn = _norm(w)
            H[:, j + 1, j] = hn
            V[j + 1] = np.where((hn > 0)[:, None], w / np.where(hn > 0, hn, 1.0)[:, None], 0)
            for i in range(j):
                t = cs[:, i] * H[:, i, j] + sn[:, i] * H[:, i + 1, j]
                H[:, i + 1, j] = -sn[:, i] * H[:, i, j] + cs[:, i] * H[:, i + 1, j]
                H[:, i, j] = t
            a, c = H[:, j, j], H[:, j + 1, j]
            den = np.hypot(a, c)
            den1 = np.where(den > 0, den, 1.0)
            cs[:, j] = np.where(den > 0, a / den1, 1.0)
            sn[:, j] = np.where(den > 0, c / den1, 0.0)
            H[:, j, j] = cs[:, j] * a + sn[:, j] * c
            H[:, j + 1, j] = 0.0
            g[:, j + 1] = -sn[:, j] * g[:, j]
            g[:, j] = cs[:, j] * g[:, j]
            used = j + 1
            total += 1
            if np.all(done | (np.abs(g[:, j + 1]) / bnorm < 0.5 * tol)):
                break
        R = H[:, :used, :used].copy()
        diag = np.einsum("bii->bi", R)
        tiny = np.abs(diag) < 1e-300
        if np.any(tiny):
            idx = np.nonzero(tiny)
            R[idx[0], idx[1], idx[1]] = 1.0
        y = np.linalg.solve(R, g[:, :used, None])[..., 0]
        y[done] = 0.0
        x = x + np.einsum("bj,jbn->bn", y, V[:used])
    return x, KrylovInfo(total, rel, rel < tol)
