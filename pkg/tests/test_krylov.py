import numpy as np
import pytest

from tvdbar.krylov import real_gmres


def _real_linear(n, rng, scale=0.3):
    A = np.eye(n) + scale * rng.standard_normal((n, n)) / np.sqrt(n)
    B = scale * (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2 * n)
    return lambda v: v @ A.T + np.conj(v) @ B.T, A, B


def _dense(A, B):
    # x -> A x + B conj(x) as a real 2n x 2n matrix
    Ar, Br, Bi = A, B.real, B.imag
    return np.block([[Ar + Br, Bi], [Bi, Ar - Br]])


def test_matches_dense_real_solve(rng):
    n = 30
    apply, A, B = _real_linear(n, rng)
    b = rng.standard_normal((3, n)) + 1j * rng.standard_normal((3, n))
    x, info = real_gmres(apply, b, tol=1e-12, restart=60)
    M = _dense(A, B)
    for row in range(3):
        rhs = np.concatenate([b[row].real, b[row].imag])
        y = np.linalg.solve(M, rhs)
        assert np.allclose(x[row], y[:n] + 1j * y[n:], atol=1e-9)
    assert info.converged.all()


def test_restarted_converges(rng):
    n = 40
    apply, _, _ = _real_linear(n, rng, 0.5)
    b = rng.standard_normal((2, n)) + 0j
    x, info = real_gmres(apply, b, tol=1e-10, restart=5, maxiter=500)
    assert info.converged.all()
    assert np.all(np.linalg.norm(apply(x) - b, axis=1) / np.linalg.norm(b, axis=1) < 1e-9)


def test_identity_one_step(rng):
    b = rng.standard_normal((4, 10)) + 1j * rng.standard_normal((4, 10))
    x, info = real_gmres(lambda v: v, b, tol=1e-12)
    assert np.allclose(x, b)
    assert info.iterations <= 1


def test_zero_rhs_row(rng):
    n = 12
    apply, _, _ = _real_linear(n, rng)
    b = np.zeros((2, n), complex)
    b[1] = rng.standard_normal(n)
    x, info = real_gmres(apply, b, tol=1e-10)
    assert np.all(x[0] == 0)
    assert info.converged.all()


def test_reports_nonconvergence(rng):
    n = 50
    apply, _, _ = _real_linear(n, rng, 3.0)
    b = rng.standard_normal((1, n)) + 0j
    _, info = real_gmres(apply, b, tol=1e-14, restart=3, maxiter=6)
    assert not info.converged.all()
    assert info.residuals.max() > 1e-14


def test_rejects_bad_shape():
    with pytest.raises(ValueError):
        real_gmres(lambda v: v, np.ones(5))
