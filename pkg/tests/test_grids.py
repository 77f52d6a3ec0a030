import numpy as np
import pytest

from tvdbar.grids import make_kgrid, make_zgrid


def test_paper_disc_count():
    g = make_zgrid(8, 2.3)
    assert g.points.size == 65536
    assert int(g.disc_mask.sum()) == 9729


def test_half_open_axis():
    g = make_zgrid(4, 2.0)
    x = g.points[0].real
    assert g.points.size == 256
    assert x[0] == -2.0 and x[-1] == pytest.approx(2.0 - g.h)
    # row-major, y outer
    assert g.points[3, 5] == pytest.approx(x[5] + 1j * x[3])


def test_disc_mask_point_symmetry():
    # with the half-open convention only indices >= 1 have mirror images
    g = make_zgrid(4, 2.0)
    m = g.disc_mask
    n = g.n
    for iy in range(1, n):
        for ix in range(1, n):
            assert m[iy, ix] == m[n - iy, n - ix]


def test_disc_count_matches_enumeration():
    g = make_zgrid(5, 1.5)
    count = 0
    for z in g.points.ravel():
        if abs(z) <= 1.0:
            count += 1
    assert int(g.disc_mask.sum()) == count


def test_disc_index_roundtrip():
    g = make_zgrid(6, 2.0)
    idx = g.disc_index[g.disc_mask]
    assert np.array_equal(idx, np.arange(idx.size))
    vals = np.arange(idx.size) + 0.5
    full = g.scatter(vals, fill=-1.0)
    assert np.array_equal(full[g.disc_mask], vals)
    assert np.all(full[~g.disc_mask] == -1.0)


@pytest.mark.parametrize("ell,s", [(3, 2.0), (6, 1.0), (6, 0.5)])
def test_zgrid_rejects(ell, s):
    with pytest.raises(ValueError):
        make_zgrid(ell, s)


def test_disc_fraction_monotone():
    s = 2.0
    frac = [make_zgrid(ell, s).disc_mask.mean() for ell in range(4, 9)]
    for a, b in zip(frac, frac[1:]):
        assert b >= a - 2 * (2 * s / 2 ** 4)


def test_grids_immutable():
    g = make_zgrid(4, 2.0)
    with pytest.raises(ValueError):
        g.points[0, 0] = 0


@pytest.mark.parametrize("m,R,Rt", [(7, 5.0, 10.0), (7, 4.0, 6.6)])
def test_kgrid_paper_radii(m, R, Rt):
    kg = make_kgrid(m, R, Rt)
    assert kg.points.shape == (2 ** m, 2 ** m)
    assert np.all(kg.mask_Rtilde[kg.mask_R])
    assert kg.mask_R.sum() < kg.mask_Rtilde.sum()
    assert kg.points[kg.origin] == 0


def test_kgrid_annulus_algebra():
    kg = make_kgrid(3, 2.0, 3.0)
    inner = np.abs(kg.points) < kg.R - 1
    assert np.array_equal(kg.mask_annulus, kg.mask_Rtilde & ~inner)
    assert not np.any(kg.mask_annulus & inner)
    assert np.array_equal(kg.mask_annulus | (inner & kg.mask_Rtilde), kg.mask_Rtilde)


@pytest.mark.parametrize("R,Rt", [(1.0, 3.0), (0.5, 3.0), (3.0, 3.0), (4.0, 3.0)])
def test_kgrid_rejects(R, Rt):
    with pytest.raises(ValueError):
        make_kgrid(5, R, Rt)


def test_headers():
    assert make_zgrid(5, 2.0).header() == {"ell": 5, "s": 2.0}
    assert make_kgrid(5, 4.0, 6.6).header() == {"m": 5, "R": 4.0, "R_tilde": 6.6}
