"""The iterated D-bar / TV / contrast / extension reconstruction loop.

One pass ``j`` runs

1. D-bar inversion of the current scattering field (cutoff ``R`` on the
   first pass, the extended radius afterwards),
2. TV segmentation of the smooth image,
3. contrast adjustment of the segmented image against the CGO sinogram,
4. unless this was the last pass: the scattering transform of the adjusted
   image is computed on the annulus ``R - 1 <= |k| < R~`` and blended with
   the measured-data transform ``tau0`` through the radial weight ``chi``.
"""
from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .beltrami import BeltramiError, BeltramiSolver
from .boundary_cgo import (BoundaryCgoSolver, TraceSolveError, build_sinogram,
                           extract_tau)
from .contrast import ContrastBounds, enhance
from .dbar import DbarError, reconstruct_sigma
from .direct import FAILED_VALUE
from .forward import BoundaryOpMatrix, ForwardError, make_disc_mesh
from .grids import KGrid, ZGrid, make_kgrid, make_zgrid
from .phantoms import ConductivityImage, beltrami_mu, unrescale_background
from .scattering import ScatteringField
from .tv_seg import segment

logger = logging.getLogger(__name__)

NUMERICAL_ERRORS = (BeltramiError, TraceSolveError, DbarError, ForwardError,
                    np.linalg.LinAlgError, FloatingPointError)


@dataclass(frozen=True)
class PipelineConfig:
    R: float = 5.0
    R_tilde: float = 10.0
    J: int = 3
    K: int = 4
    lam: float = 0.1
    c: float = 0.3
    C: float = 2.5
    eta: float = 0.0
    seed: int = 0
    ell: int = 7
    s: float = 2.0
    m: int = 6
    N: int = 16
    mesh_level: int = 4
    rho: float = 2.0
    budget: int = 60
    s_param: float = 0.0
    sigma0: float = 1.0
    delta_R: float | None = None
    thresh: float | None = None
    support_radius: float | None = None

    def __post_init__(self):
        errs = []
        if not self.R > 1:
            errs.append("R must exceed 1")
        if not self.R_tilde > self.R:
            errs.append("R_tilde must exceed R")
        if int(self.J) != self.J or self.J < 1:
            errs.append("J must be a positive integer")
        if int(self.K) != self.K or self.K < 2:
            errs.append("K must be an integer >= 2")
        if not self.lam > 0:
            errs.append("lam must be positive")
        if not 0 < self.c < 1:
            errs.append("c must lie in (0, 1)")
        if not self.C > 1:
            errs.append("C must exceed 1")
        if self.eta < 0:
            errs.append("eta must be nonnegative")
        if self.s < 2:
            errs.append("s must be at least 2 (Beltrami kernel radius)")
        if not 0 < self.rho < self.R:
            errs.append("rho must lie in (0, R)")
        if self.budget < 9:
            errs.append("budget must be at least 9")
        if not self.sigma0 > 0:
            errs.append("sigma0 must be positive")
        if self.delta_R is not None and not self.delta_R > 0:
            errs.append("delta_R must be positive")
        if self.thresh is not None and not self.thresh >= 0:
            errs.append("thresh must be nonnegative")
        if self.support_radius is not None and not 0 < self.support_radius <= 1:
            errs.append("support_radius must lie in (0, 1]")
        if errs:
            raise ValueError("; ".join(errs))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**d)

    def grids(self) -> tuple[ZGrid, KGrid]:
        return make_zgrid(self.ell, self.s), make_kgrid(self.m, self.R, self.R_tilde)

    def extension_radius(self, j: int) -> float:
        """Outer radius of the data produced by extension pass ``j``."""
        if self.delta_R is None:
            return self.R_tilde
        return min(self.R_tilde, self.R + j * self.delta_R)


@dataclass
class IterationRecord:
    j: int
    sigma_db: ConductivityImage = field(repr=False)
    sigma_tv: ConductivityImage = field(repr=False)
    sigma_ce: ConductivityImage = field(repr=False)
    tau: ScatteringField = field(repr=False)
    cutoff: float = 0.0
    contrast: tuple = (0.0, 0.0, 0.0)        # s, t, discrepancy
    metrics: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)


@dataclass
class PipelineResult:
    config: PipelineConfig
    tau0: ScatteringField | None = field(default=None, repr=False)
    records: list = field(default_factory=list)
    failure: tuple | None = None              # (stage, message)
    stopped_early: bool = False

    @property
    def ok(self) -> bool:
        return self.failure is None


# -- metrics -------------------------------------------------------------------

def _check_same_grid(a: ConductivityImage, b: ConductivityImage):
    if a.grid.shape != b.grid.shape or a.grid.s != b.grid.s:
        raise ValueError("images live on different grids")


def relative_l2(a: ConductivityImage, b: ConductivityImage) -> float:
    """``||a - b|| / ||b||`` over the closed-disc pixels."""
    _check_same_grid(a, b)
    da, db = a.disc_values, b.disc_values
    nb = np.linalg.norm(db)
    if nb == 0:
        raise ValueError("reference image vanishes on the disc")
    return float(np.linalg.norm(da - db) / nb)


def ssim(a: ConductivityImage, b: ConductivityImage, win_sigma: float = 1.5,
         K1: float = 0.01, K2: float = 0.03) -> float:
    """Mean structural similarity of ``a`` against the reference ``b``.

    Local statistics use an 11 x 11 Gaussian window (width 1.5 pixels) over
    the full grid with the exterior set to 1; the SSIM map is averaged over
    the disc pixels.  The dynamic range is that of ``b`` on the disc (1 if
    ``b`` is constant there).
    """
    _check_same_grid(a, b)
    disc = a.grid.disc_mask
    x = np.where(disc, a.values, 1.0)
    y = np.where(disc, b.values, 1.0)
    L = float(np.ptp(b.disc_values)) or 1.0
    C1, C2 = (K1 * L) ** 2, (K2 * L) ** 2

    def filt(v):
        return gaussian_filter(v, win_sigma, truncate=3.5, mode="reflect")

    mx, my = filt(x), filt(y)
    vx = filt(x * x) - mx * mx
    vy = filt(y * y) - my * my
    cxy = filt(x * y) - mx * my
    smap = ((2 * mx * my + C1) * (2 * cxy + C2)) / ((mx * mx + my * my + C1) * (vx + vy + C2))
    return float(smap[disc].mean())


def stop_check(sigma_ce_j: ConductivityImage, sigma_ce_prev: ConductivityImage,
               thresh: float) -> bool:
    """True when ``||s_j - s_{j-1}|| / ||s_j|| < thresh`` on the disc."""
    _check_same_grid(sigma_ce_j, sigma_ce_prev)
    a, b = sigma_ce_j.disc_values, sigma_ce_prev.disc_values
    na = np.linalg.norm(a)
    if na == 0:
        return False
    return bool(np.linalg.norm(a - b) / na < thresh)


def stage_metrics(record: IterationRecord, truth: ConductivityImage) -> dict:
    out = {}
    for name in ("db", "tv", "ce"):
        img = getattr(record, f"sigma_{name}")
        out[f"{name}_l2"] = relative_l2(img, truth)
        out[f"{name}_ssim"] = ssim(img, truth)
    return out


# -- scattering extension ------------------------------------------------------

def blend_chi(k, R: float) -> np.ndarray:
    """Radial weight: 1 on ``|k| <= R-1``, ``p(|k| - R + 1)`` with
    ``p(t) = 1 - 3t^2 + 2t^3`` in between, 0 on ``|k| >= R``."""
    if not R > 1:
        raise ValueError("R must exceed 1")
    t = np.clip(np.abs(np.asarray(k)) - (R - 1.0), 0.0, 1.0)
    return 1.0 - 3.0 * t ** 2 + 2.0 * t ** 3


def extend_scattering(tau0: ScatteringField, sigma_ce: ConductivityImage, R: float,
                      R_tilde: float, **solver_kw) -> ScatteringField:
    """``chi tau0 + (1 - chi) tau~`` on ``|k| < R_tilde`` where ``tau~`` is the
    scattering transform of ``sigma_ce`` computed on ``R - 1 <= |k| < R_tilde``."""
    kg = tau0.kgrid
    k = kg.points
    ring = (np.abs(k) >= R - 1) & (np.abs(k) < R_tilde)
    ks = k[ring]
    order = np.argsort(np.abs(ks), kind="stable")
    tilde = np.zeros(kg.shape, complex)
    solver = BeltramiSolver(beltrami_mu(sigma_ce), sigma_ce.grid, **solver_kw)
    vals = np.zeros(ks.shape, complex)
    vals[order] = solver.tau(ks[order])
    tilde[ring] = vals
    chi = blend_chi(k, R)
    inside = np.abs(k) < R_tilde
    tau = np.where(inside, chi * tau0.tau + (1 - chi) * tilde, 0)
    tau[kg.origin] = 0.0
    return ScatteringField(kg, tau, inside)


# -- driver --------------------------------------------------------------------

def _rescaled(dn: BoundaryOpMatrix, sigma0: float) -> BoundaryOpMatrix:
    if sigma0 == 1.0:
        return dn
    return dataclasses.replace(dn, matrix=dn.matrix / sigma0)


def enforce_support(image: ConductivityImage, radius: float | None) -> ConductivityImage:
    """Set the image to 1 outside ``|z| <= radius`` (a known inactive rim,
    such as a pipe wall, used as prior information)."""
    if radius is None:
        return image
    outside = np.abs(image.grid.points) > radius
    return image.with_values(np.where(outside, 1.0, image.values))


def run_pipeline(dn: BoundaryOpMatrix, config: PipelineConfig,
                 truth: ConductivityImage | None = None) -> PipelineResult:
    """Run the reconstruction loop on DN data.

    Images in the records are in physical units (the background rescaling by
    ``sigma0`` is undone).  A numerical failure stops the loop; the records
    finished so far are returned with ``failure = (stage, message)``.
    """
    cfg = config
    zg, kg = cfg.grids()
    data = _rescaled(dn, cfg.sigma0)
    mesh = make_disc_mesh(cfg.mesh_level, 2 * cfg.N + 1)
    result = PipelineResult(cfg)
    stage = "scattering"
    try:
        t0 = time.perf_counter()
        solver = BoundaryCgoSolver(data)
        tau0 = extract_tau(data, kg, cfg.R, solver)
        measured = build_sinogram(data, cfg.rho, solver)
        result.tau0 = tau0
        logger.info("tau0 on |k| < %g in %.1fs", cfg.R, time.perf_counter() - t0)
        tau, cutoff = tau0, cfg.R
        prev_ce = None
        for j in range(1, cfg.J + 1):
            timings = {}
            stage = "dbar"
            t0 = time.perf_counter()
            db = enforce_support(reconstruct_sigma(tau, zg, cutoff), cfg.support_radius)
            timings["dbar"] = time.perf_counter() - t0
            stage = "segment"
            t0 = time.perf_counter()
            try:
                tv = segment(db, cfg.K, cfg.lam, cfg.s_param, seed=cfg.seed).image
            except ValueError as exc:
                if "distinct" not in str(exc):
                    raise
                logger.info("segmentation skipped: %s", exc)
                tv = db
            tv = enforce_support(tv, cfg.support_radius)
            timings["segment"] = time.perf_counter() - t0
            stage = "enhance"
            t0 = time.perf_counter()
            try:
                enh = enhance(tv, measured, ContrastBounds(cfg.c, cfg.C), cfg.budget, cfg.rho, mesh)
                ce, contrast = enh.image, (enh.s, enh.t, enh.value)
                if enh.value >= FAILED_VALUE:
                    raise ForwardError("every contrast candidate failed")
            except ValueError as exc:
                if "no contrast" not in str(exc):
                    raise
                ce, contrast = tv, (0.0, 0.0, float("nan"))
            timings["enhance"] = time.perf_counter() - t0
            rec = IterationRecord(j, unrescale_background(db, cfg.sigma0),
                                  unrescale_background(tv, cfg.sigma0),
                                  unrescale_background(ce, cfg.sigma0),
                                  tau, cutoff, contrast, timings=timings)
            if truth is not None:
                rec.metrics = stage_metrics(rec, truth)
            result.records.append(rec)
            logger.info("pass %d: %s", j, rec.metrics or timings)
            if j == cfg.J:
                break
            if cfg.thresh is not None and prev_ce is not None and stop_check(ce, prev_ce, cfg.thresh):
                result.stopped_early = True
                break
            prev_ce = ce
            stage = "extend"
            t0 = time.perf_counter()
            outer = cfg.extension_radius(j)
            tau = extend_scattering(tau0, ce, cfg.R, outer)
            cutoff = outer
            timings["extend"] = time.perf_counter() - t0
    except NUMERICAL_ERRORS as exc:
        logger.error("stage %s failed: %s", stage, exc)
        result.failure = (stage, str(exc))
    return result
