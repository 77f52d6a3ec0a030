import dataclasses

import numpy as np
import pytest
from skimage.metrics import structural_similarity

from tvdbar import pipeline as pl
from tvdbar.beltrami import scattering_from_mu
from tvdbar.dbar import DbarError
from tvdbar.forward import homogeneous_dn, simulate_dn
from tvdbar.grids import make_kgrid, make_zgrid
from tvdbar.phantoms import ConductivityImage, PhantomSpec, beltrami_mu, build_phantom
from tvdbar.pipeline import (PipelineConfig, blend_chi, enforce_support, extend_scattering,
                             relative_l2, run_pipeline, ssim, stop_check)
from tvdbar.scattering import ScatteringField


@pytest.fixture(scope="module")
def grid():
    return make_zgrid(6, 2.0)


def _img(grid, v):
    return ConductivityImage(grid, np.where(grid.disc_mask, v, 1.0), 1.0)


# -- blending ------------------------------------------------------------------

def test_blend_examples():
    R = 5.0
    assert blend_chi(R - 1, R) == 1.0
    assert blend_chi(R, R) == 0.0
    assert blend_chi(R - 0.5, R) == 0.5
    assert blend_chi(0.0, R) == 1.0 and blend_chi(7.0j, R) == 0.0


def test_blend_is_c1():
    R = 4.0
    eps = 1e-7
    for r in (R - 1, R):
        assert abs(blend_chi(r + eps, R) - blend_chi(r - eps, R)) < 1e-12
        d_in = (blend_chi(r, R) - blend_chi(r - eps, R)) / eps
        d_out = (blend_chi(r + eps, R) - blend_chi(r, R)) / eps
        assert abs(d_in) < 1e-6 and abs(d_out) < 1e-6


def test_blend_rejects_small_radius():
    with pytest.raises(ValueError):
        blend_chi(0.5, 1.0)


def test_extend_with_unit_conductivity(grid):
    kg = make_kgrid(4, 3.0, 4.0)
    rng = np.random.default_rng(0)
    tau0 = ScatteringField(kg, np.where(kg.mask_R, rng.standard_normal(kg.shape) + 0j, 0), kg.mask_R)
    out = extend_scattering(tau0, _img(grid, 1.0), 3.0, 4.0)
    chi = blend_chi(kg.points, 3.0)
    expect = np.where(np.abs(kg.points) < 4.0, chi * tau0.tau, 0)
    expect[kg.origin] = 0
    assert np.array_equal(out.tau, expect)
    assert np.array_equal(out.valid, np.abs(kg.points) < 4.0)


def test_extend_with_truth_matches_golden_on_annulus(grid):
    spec = PhantomSpec(({"type": "ellipse", "center": [0.2, 0], "axes": [0.3, 0.4], "angle": 20,
                         "value": 1.8},))
    truth = build_phantom(spec, grid)
    kg = make_kgrid(4, 3.0, 4.0)
    golden = scattering_from_mu(beltrami_mu(truth), grid, kg, tol=1e-9)
    tau0 = ScatteringField(kg, np.where(kg.mask_R, golden.tau, 0), kg.mask_R)
    out = extend_scattering(tau0, truth, 3.0, 4.0, tol=1e-9)
    ann = np.abs(kg.points) < 4.0
    assert np.max(np.abs(out.tau - golden.tau)[ann]) < 1e-6
    # half-way through the blend the two sources are averaged
    half = np.isclose(np.abs(kg.points), 2.5)
    if half.any():
        assert np.allclose(out.tau[half], golden.tau[half], atol=1e-6)


# -- metrics -------------------------------------------------------------------

def test_relative_l2_examples(grid, rng):
    b = _img(grid, 1 + 0.5 * rng.random(grid.shape))
    assert relative_l2(b, b) == 0
    assert np.isclose(relative_l2(b.with_values(1.1 * b.values), b), 0.1)
    pert = rng.standard_normal(grid.shape) * grid.disc_mask
    pert /= np.linalg.norm(pert)
    a = b.with_values(b.values + pert)
    brute = np.sqrt(sum(pert[i, j] ** 2 for i, j in zip(*np.nonzero(grid.disc_mask))))
    brute /= np.sqrt(sum(b.values[i, j] ** 2 for i, j in zip(*np.nonzero(grid.disc_mask))))
    assert np.isclose(relative_l2(a, b), brute, rtol=1e-12)


def test_metrics_reject_grid_mismatch(grid):
    other = make_zgrid(5, 2.0)
    with pytest.raises(ValueError):
        relative_l2(_img(grid, 1.0), _img(other, 1.0))
    with pytest.raises(ValueError):
        ssim(_img(grid, 1.0), _img(other, 1.0))


def test_ssim_identity(grid, rng):
    b = _img(grid, 1 + rng.random(grid.shape))
    assert np.isclose(ssim(b, b), 1.0, atol=1e-12)


def test_ssim_matches_reference_implementation(grid, rng):
    truth = _img(grid, np.where(np.abs(grid.points) < 0.5, 2.0, 1.0))
    rec = _img(grid, truth.values + 0.2 * rng.standard_normal(grid.shape))
    L = np.ptp(truth.disc_values)
    _, smap = structural_similarity(rec.values, truth.values, gaussian_weights=True, sigma=1.5,
                                    use_sample_covariance=False, data_range=L, full=True)
    assert np.isclose(ssim(rec, truth), smap[grid.disc_mask].mean(), atol=1e-10)


def test_ssim_anticorrelated_block():
    g = make_zgrid(4, 1.1)
    base = np.zeros(g.shape)
    base[4:12, 4:12] = np.indices((8, 8)).sum(axis=0) % 2 - 0.5
    a = _img(g, 1 + base)
    b = _img(g, 1 - base)
    assert ssim(a, b) < 0


def test_ssim_independent_noise(grid):
    vals = []
    for seed in range(20):
        r = np.random.default_rng(seed)
        vals.append(ssim(_img(grid, 1 + r.standard_normal(grid.shape)),
                         _img(grid, 1 + r.standard_normal(grid.shape))))
    assert abs(np.mean(vals)) < 0.2


def test_stop_check(grid):
    a = _img(grid, 1.0)
    b = _img(grid, np.where(np.abs(grid.points) < 0.3, 1.5, 1.0))
    assert stop_check(a, a, 1e-9)
    assert not stop_check(a, b, 0.0)
    assert not stop_check(b, a, 0.01)
    assert stop_check(b, a, 1.0)


def test_enforce_support(grid):
    img = _img(grid, 2.0)
    out = enforce_support(img, 0.8)
    r = np.abs(grid.points)
    assert np.all(out.values[r > 0.8] == 1) and np.all(out.values[r <= 0.8] == 2)
    assert enforce_support(img, None) is img


# -- configuration ---------------------------------------------------------------

@pytest.mark.parametrize("bad", [dict(R=1.0), dict(R_tilde=4.0), dict(J=0), dict(K=1),
                                 dict(lam=0), dict(c=1.2), dict(C=0.9), dict(eta=-1),
                                 dict(s=1.5), dict(budget=4), dict(support_radius=1.5)])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        PipelineConfig(**bad)


def test_config_roundtrip_and_defaults():
    cfg = PipelineConfig.from_dict({"R": 4, "R_tilde": 6.6})
    assert cfg.J == 3
    assert PipelineConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError, match="unknown"):
        PipelineConfig.from_dict({"radius": 3})


def test_progressive_radius():
    cfg = PipelineConfig(R=4, R_tilde=7, delta_R=1.5)
    assert [cfg.extension_radius(j) for j in (1, 2, 3)] == [5.5, 7.0, 7.0]
    assert PipelineConfig().extension_radius(2) == 10.0


# -- driver ----------------------------------------------------------------------

SMALL = dict(R=3.0, R_tilde=4.0, J=2, K=3, ell=6, m=5, mesh_level=2, budget=12)


def test_exact_homogeneous_data_is_fixed_point():
    res = run_pipeline(homogeneous_dn(), PipelineConfig(**SMALL))
    assert res.ok and len(res.records) == 2
    assert np.all(res.tau0.tau == 0)
    for rec in res.records:
        for img in (rec.sigma_db, rec.sigma_tv, rec.sigma_ce):
            assert np.allclose(img.values, 1.0, atol=1e-12)


def test_background_rescaling_is_undone():
    # data of 2 * sigma with sigma0 = 2 reconstructs 2 * (reconstruction of sigma)
    cfg = PipelineConfig(**dict(SMALL, J=1))
    spec = PhantomSpec(({"type": "ellipse", "center": [0, 0], "axes": [0.4, 0.4], "angle": 0,
                         "value": 1.5},))
    dn1 = simulate_dn(spec, mesh_level=2)
    dn2 = dataclasses.replace(dn1, matrix=2.0 * dn1.matrix)
    a = run_pipeline(dn1, cfg).records[0]
    b = run_pipeline(dn2, dataclasses.replace(cfg, sigma0=2.0)).records[0]
    assert np.allclose(b.sigma_db.values, 2.0 * a.sigma_db.values, rtol=1e-10)


def test_failure_returns_partial_records(monkeypatch):
    calls = {"n": 0}
    real = pl.reconstruct_sigma

    def flaky(*args, **kw):
        calls["n"] += 1
        if calls["n"] == 2:
            raise DbarError("synthetic failure")
        return real(*args, **kw)

    monkeypatch.setattr(pl, "reconstruct_sigma", flaky)
    spec = PhantomSpec(({"type": "ellipse", "center": [0, 0], "axes": [0.4, 0.4], "angle": 0,
                         "value": 1.5},))
    res = run_pipeline(simulate_dn(spec, mesh_level=2), PipelineConfig(**SMALL))
    assert res.failure == ("dbar", "synthetic failure")
    assert len(res.records) == 1 and not res.ok


def test_threshold_stops_early():
    cfg = PipelineConfig(**dict(SMALL, J=3, thresh=1.0))
    spec = PhantomSpec(({"type": "ellipse", "center": [0, 0], "axes": [0.4, 0.4], "angle": 0,
                         "value": 1.5},))
    res = run_pipeline(simulate_dn(spec, mesh_level=2), cfg)
    assert res.stopped_early and len(res.records) == 2
