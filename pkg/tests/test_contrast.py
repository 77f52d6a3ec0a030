import numpy as np
import pytest

from tvdbar.boundary_cgo import build_sinogram
from tvdbar.contrast import (CandidateObjective, ContrastBounds, enhance, evaluate_candidate,
                             make_family)
from tvdbar.forward import make_disc_mesh, simulate_dn
from tvdbar.grids import make_zgrid
from tvdbar.phantoms import ConductivityImage


@pytest.fixture(scope="module")
def grid():
    return make_zgrid(6, 2.0)


def _two_blobs(grid, hi=1.6, lo=0.7):
    z = grid.points
    v = np.ones(grid.shape)
    v[np.abs(z - 0.4) < 0.25] = hi
    v[np.abs(z + 0.4) < 0.25] = lo
    v[np.abs(z + 0.4j) < 0.15] = 0.5 * (1 + lo)
    return ConductivityImage(grid, v, 1.0)


def test_endpoints_exact(grid):
    fam = make_family(_two_blobs(grid), ContrastBounds(0.3, 2.5))
    top = fam.member(1, 1).disc_values
    assert top.min() == 0.3 and top.max() == 2.5
    assert np.all(fam.member(0, 0).values == 1.0)


def test_regions_preserved(grid):
    img = _two_blobs(grid)
    fam = make_family(img, ContrastBounds(0.3, 2.5))
    out = fam.member(0.4, 0.8).values
    assert np.array_equal(out > 1, img.values > 1)
    assert np.array_equal(out < 1, img.values < 1)
    assert np.array_equal(out == 1, img.values == 1)


def test_monotone_in_parameters(grid):
    fam = make_family(_two_blobs(grid), ContrastBounds(0.3, 2.5))
    prev_max, prev_min = 1.0, 1.0
    for t in np.linspace(0, 1, 6):
        v = fam.member(t, t).disc_values
        assert v.max() >= prev_max and v.min() <= prev_min
        prev_max, prev_min = v.max(), v.min()


def test_inert_branch(grid):
    v = np.where(np.abs(grid.points) < 0.3, 1.5, 1.0)
    fam = make_family(ConductivityImage(grid, v, 1.0), ContrastBounds(0.3, 2.5))
    assert not fam.has_low and fam.has_high
    assert np.array_equal(fam.member(0.0, 0.5).values, fam.member(1.0, 0.5).values)


def test_constant_image_rejected(grid):
    with pytest.raises(ValueError, match="no contrast"):
        make_family(ConductivityImage(grid, np.ones(grid.shape), 1.0), ContrastBounds())


@pytest.mark.parametrize("c, C", [(0.0, 2.0), (1.0, 2.0), (0.5, 1.0), (0.5, 0.9)])
def test_bounds_validated(c, C):
    with pytest.raises(ValueError):
        ContrastBounds(c, C)


def test_self_consistency(grid):
    # data generated by a family member is matched exactly at that member
    mesh = make_disc_mesh(2)
    fam = make_family(_two_blobs(grid), ContrastBounds(0.3, 2.5))
    s0, t0 = 0.5, 0.75
    measured = build_sinogram(simulate_dn(fam.member(s0, t0), mesh=mesh))
    obj = CandidateObjective(fam, measured, mesh)
    assert obj((s0, t0)) < 1e-10
    assert obj((0.0, 0.0)) > obj((0.4, 0.7)) > 0
    assert evaluate_candidate(fam, s0, t0, measured, mesh) < 1e-10
    with pytest.raises(ValueError):
        obj((1.2, 0.5))


def test_enhance_recovers_member(grid):
    mesh = make_disc_mesh(2)
    img = _two_blobs(grid)
    fam = make_family(img, ContrastBounds(0.3, 2.5))
    s0, t0 = 1 / 6, 5 / 6
    dn = simulate_dn(fam.member(s0, t0), mesh=mesh)
    res = enhance(img, dn, ContrastBounds(0.3, 2.5), budget=30, mesh=mesh)
    assert abs(res.t - t0) < 0.1 and abs(res.s - s0) < 0.2
    assert res.value < 0.05
    assert any(np.allclose((s, t), 0) for s, t, _ in res.samples)
