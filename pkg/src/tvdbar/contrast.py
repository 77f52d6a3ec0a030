"""Contrast adjustment of a segmented image against CGO sinogram data.

Given a piecewise-constant image ``sigma~`` with background 1, set
``f = sigma~ - 1``, ``m = min f`` and ``M = max f``.  With a priori bounds
``0 < c < 1 < C`` the two-parameter family

    sigma_{s,t} = 1 + t (C - 1) f / M     where sigma~ > 1
                  1 + s (c - 1) f / m     where sigma~ < 1
                  1                       elsewhere

keeps the regions of ``sigma~`` and rescales the contrast above and below 1
independently.  ``(s, t)`` is chosen in ``[0, 1]^2`` by DIRECT, minimizing the
relative distance between the sinogram of ``sigma_{s,t}`` and the measured one.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .boundary_cgo import BoundaryCgoSolver, Sinogram, build_sinogram, sinogram_discrepancy
from .direct import direct_minimize
from .forward import BoundaryOpMatrix, FemMesh, make_disc_mesh, simulate_dn
from .phantoms import ConductivityImage

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ContrastBounds:
    c: float = 0.3
    C: float = 2.5

    def __post_init__(self):
        if not 0 < self.c < 1:
            raise ValueError(f"lower bound c={self.c} must lie in (0, 1)")
        if not self.C > 1:
            raise ValueError(f"upper bound C={self.C} must exceed 1")


@dataclass(frozen=True)
class ContrastFamily:
    base: ConductivityImage
    bounds: ContrastBounds
    f: np.ndarray = field(repr=False)
    m: float = 0.0
    M: float = 0.0

    @property
    def has_low(self) -> bool:
        return self.m < 0

    @property
    def has_high(self) -> bool:
        return self.M > 0

    def member(self, s: float, t: float) -> ConductivityImage:
        """``sigma_{s,t}``; a parameter whose branch is empty has no effect."""
        f = self.f
        out = np.ones_like(f)
        # written as (1 - w) + w * bound so the extremes hit c, C and 1 exactly
        if self.has_high:
            hi = f > 0
            w = t * (f[hi] / self.M)
            out[hi] = (1.0 - w) + w * self.bounds.C
        if self.has_low:
            lo = f < 0
            w = s * (f[lo] / self.m)
            out[lo] = (1.0 - w) + w * self.bounds.c
        return self.base.with_values(out)


def make_family(sigma_tv: ConductivityImage, bounds: ContrastBounds) -> ContrastFamily:
    disc = sigma_tv.grid.disc_mask
    f = np.where(disc, sigma_tv.values - 1.0, 0.0)
    if not np.any(f != 0):
        raise ValueError("image is identically 1; there is no contrast to adjust")
    return ContrastFamily(sigma_tv, bounds, f, float(min(f.min(), 0.0)), float(max(f.max(), 0.0)))


class CandidateObjective:
    """``(s, t) -> ||S(sigma_{s,t}) - S_meas|| / ||S_meas||``.

    Noiseless FEM data are simulated for each candidate on a fixed mesh, so the
    measured data should come from the same forward model.
    """

    def __init__(self, family: ContrastFamily, measured: Sinogram,
                 mesh: FemMesh | None = None):
        self.family = family
        self.measured = measured
        self.mesh = mesh or make_disc_mesh(4, 2 * measured.N + 1)

    def sinogram(self, s: float, t: float) -> Sinogram:
        dn = simulate_dn(self.family.member(s, t), 0.0, 0, self.measured.N, self.mesh)
        return build_sinogram(dn, self.measured.rho)

    def __call__(self, x) -> float:
        s, t = float(x[0]), float(x[1])
        if not (0 <= s <= 1 and 0 <= t <= 1):
            raise ValueError(f"(s, t)=({s}, {t}) outside the unit square")
        return sinogram_discrepancy(self.sinogram(s, t), self.measured)


def evaluate_candidate(family: ContrastFamily, s: float, t: float, measured: Sinogram,
                       mesh: FemMesh | None = None) -> float:
    return CandidateObjective(family, measured, mesh)((s, t))


@dataclass
class Enhancement:
    image: ConductivityImage
    s: float
    t: float
    value: float
    samples: list = field(default_factory=list, repr=False)   # (s, t, value)


def enhance(sigma_tv: ConductivityImage, measured: Sinogram | BoundaryOpMatrix,
            bounds: ContrastBounds, budget: int = 60, rho: float = 2.0,
            mesh: FemMesh | None = None) -> Enhancement:
    """Best member of the contrast family of ``sigma_tv``.

    ``measured`` is either a sinogram or the DN data it is built from.  Besides
    the DIRECT samples, ``(0, 0)`` (the homogeneous image) is always tried.
    """
    if isinstance(measured, BoundaryOpMatrix):
        measured = build_sinogram(measured, rho, BoundaryCgoSolver(measured))
    family = make_family(sigma_tv, bounds)
    obj = CandidateObjective(family, measured, mesh)
    res = direct_minimize(obj, budget=budget, extra_points=[(0.0, 0.0)])
    s, t = (float(v) for v in res.x)
    logger.info("contrast: s=%.4f t=%.4f discrepancy %.4g after %d samples",
                s, t, res.value, res.evaluations)
    samples = [(float(x[0]), float(x[1]), v) for x, v in res.samples]
    return Enhancement(family.member(s, t), s, t, res.value, samples)
