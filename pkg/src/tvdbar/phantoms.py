"""Piecewise-constant conductivity phantoms and the Beltrami coefficient.

A phantom is described by a :class:`PhantomSpec`: a background value and an
ordered list of shapes.  Shapes are painted in order, so a later shape
overrides an earlier one where they overlap.  Every shape must lie strictly
inside the unit disc.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .grids import ZGrid


@dataclass(frozen=True)
class ConductivityImage:
    """Real conductivity sampled on a z-grid.

    ``values`` has the grid shape; points outside the closed unit disc hold
    ``background``.
    """

    grid: ZGrid
    values: np.ndarray = field(repr=False)
    background: float = 1.0

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} != grid {self.grid.shape}")

    @property
    def disc_values(self) -> np.ndarray:
        return self.values[self.grid.disc_mask]

    def sample(self, z: np.ndarray) -> np.ndarray:
        """Nearest-pixel lookup at arbitrary points of the plane."""
        z = np.asarray(z)
        g = self.grid
        ix = np.clip(np.rint((z.real + g.s) / g.h).astype(int), 0, g.n - 1)
        iy = np.clip(np.rint((z.imag + g.s) / g.h).astype(int), 0, g.n - 1)
        return self.values[iy, ix]

    def with_values(self, values: np.ndarray) -> "ConductivityImage":
        return ConductivityImage(self.grid, np.asarray(values, dtype=float), self.background)


def _as_image(sigma) -> ConductivityImage:
    if not isinstance(sigma, ConductivityImage):
        raise TypeError("expected a ConductivityImage")
    return sigma


# -- shapes -----------------------------------------------------------------

def _ellipse_inside(shape: dict, z: np.ndarray) -> np.ndarray:
    cx, cy = shape["center"]
    a, b = shape["axes"]
    phi = np.deg2rad(shape.get("angle", 0.0))
    w = (z - complex(cx, cy)) * np.exp(-1j * phi)
    return (w.real / a) ** 2 + (w.imag / b) ** 2 <= 1.0


def _ellipse_reach(shape: dict) -> float:
    t = np.linspace(0, 2 * np.pi, 2049)
    cx, cy = shape["center"]
    a, b = shape["axes"]
    phi = np.deg2rad(shape.get("angle", 0.0))
    w = complex(cx, cy) + (a * np.cos(t) + 1j * b * np.sin(t)) * np.exp(1j * phi)
    return float(np.abs(w).max())


def _strip_inside(shape: dict, z: np.ndarray) -> np.ndarray:
    # horizontal band y_min <= y < y_max clipped to the disc |z| < radius
    return ((z.imag >= shape["y_min"]) & (z.imag < shape["y_max"])
            & (np.abs(z) < shape["radius"]))


def _annulus_inside(shape: dict, z: np.ndarray) -> np.ndarray:
    r = np.abs(z)
    return (r >= shape["r_inner"]) & (r < shape["r_outer"])


_SHAPES = {
    "ellipse": (_ellipse_inside, _ellipse_reach),
    "strip": (_strip_inside, lambda s: float(s["radius"])),
    "annulus": (_annulus_inside, lambda s: float(s["r_outer"])),
}


@dataclass(frozen=True)
class PhantomSpec:
    """Background value plus an ordered list of shape dictionaries.

    Supported shapes (all coordinates in the unit disc)::

        {"type": "ellipse", "center": [x, y], "axes": [a, b], "angle": deg, "value": v}
        {"type": "strip", "y_min": y0, "y_max": y1, "radius": r, "value": v}
        {"type": "annulus", "r_inner": r0, "r_outer": r1, "value": v}
    """

    shapes: tuple = ()
    background: float = 1.0
    name: str = ""

    def validate(self) -> None:
        if not self.background > 0:
            raise ValueError("background conductivity must be positive")
        for shape in self.shapes:
            kind = shape.get("type")
            if kind not in _SHAPES:
                raise ValueError(f"unknown shape type {kind!r}")
            if not shape["value"] > 0:
                raise ValueError(f"nonpositive conductivity {shape['value']} in {kind}")
            reach = _SHAPES[kind][1](shape)
            if reach >= 1.0:
                raise ValueError(f"{kind} reaches |z| = {reach:.3f} >= 1")

    def evaluate(self, z: np.ndarray) -> np.ndarray:
        """Conductivity at arbitrary points (later shapes win)."""
        self.validate()
        z = np.asarray(z)
        out = np.full(z.shape, float(self.background))
        for shape in self.shapes:
            inside = _SHAPES[shape["type"]][0](shape, z)
            out[inside] = shape["value"]
        return out

    def to_dict(self) -> dict:
        return {"name": self.name, "background": self.background,
                "shapes": [dict(s) for s in self.shapes]}

    @classmethod
    def from_dict(cls, d: dict) -> "PhantomSpec":
        spec = cls(tuple(d.get("shapes", ())), float(d.get("background", 1.0)),
                   d.get("name", ""))
        spec.validate()
        return spec

    @classmethod
    def load(cls, path) -> "PhantomSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def heart_and_lungs() -> PhantomSpec:
    """Reference heart-and-lungs geometry: two lungs (0.5) and a heart (2.0)."""
    return PhantomSpec(
        shapes=(
            {"type": "ellipse", "center": [-0.45, 0.1], "axes": [0.2, 0.45],
             "angle": -10.0, "value": 0.5},
            {"type": "ellipse", "center": [0.45, 0.1], "axes": [0.2, 0.45],
             "angle": 10.0, "value": 0.5},
            {"type": "ellipse", "center": [0.0, -0.3], "axes": [0.2, 0.2],
             "angle": 0.0, "value": 2.0},
        ),
        background=1.0,
        name="heart_and_lungs",
    )


def pipeline() -> PhantomSpec:
    """Reference stratified pipeline: oil (1.2) over water (2.0) over sand (0.3)
    inside a pipe wall of background conductivity 1.0 (``0.8 <= |z| < 1``)."""
    return PhantomSpec(
        shapes=(
            {"type": "strip", "y_min": 0.15, "y_max": 0.8, "radius": 0.8, "value": 1.2},
            {"type": "strip", "y_min": -0.4, "y_max": 0.15, "radius": 0.8, "value": 2.0},
            {"type": "strip", "y_min": -0.8, "y_max": -0.4, "radius": 0.8, "value": 0.3},
        ),
        background=1.0,
        name="pipeline",
    )


def build_phantom(spec: PhantomSpec, grid: ZGrid) -> ConductivityImage:
    """Rasterize ``spec`` on ``grid`` by point evaluation at the grid nodes."""
    spec.validate()
    values = spec.evaluate(grid.points)
    return ConductivityImage(grid, values, float(spec.background))


def beltrami_mu(sigma: ConductivityImage) -> np.ndarray:
    """Beltrami coefficient ``(1 - sigma) / (1 + sigma)`` on the grid."""
    sigma = _as_image(sigma)
    v = sigma.values
    if np.any(v <= 0) or not np.all(np.isfinite(v)):
        raise ValueError("conductivity must be finite and positive")
    return (1.0 - v) / (1.0 + v)


def sigma_from_mu(mu: np.ndarray) -> np.ndarray:
    return (1.0 - mu) / (1.0 + mu)


def rescale_background(sigma: ConductivityImage, sigma0: float) -> ConductivityImage:
    """Divide by ``sigma0`` so a background of ``sigma0`` becomes 1.

    The data scale the same way: ``Lambda_{sigma/sigma0} = Lambda_sigma / sigma0``.
    """
    if not sigma0 > 0:
        raise ValueError("sigma0 must be positive")
    return ConductivityImage(sigma.grid, sigma.values / sigma0, sigma.background / sigma0)


def unrescale_background(sigma: ConductivityImage, sigma0: float) -> ConductivityImage:
    if not sigma0 > 0:
        raise ValueError("sigma0 must be positive")
    return ConductivityImage(sigma.grid, sigma.values * sigma0, sigma.background * sigma0)
