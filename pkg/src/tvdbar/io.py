"""Field, matrix and preview files.

Fields are stored as raw little-endian float64 (``name.bin``) with a JSON
sidecar (``name.json``) holding the shape, the number of planes and the grid
parameters.  Complex fields are two planes (real, imaginary).
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
from pathlib import Path

import numpy as np

from .boundary_cgo import Sinogram
from .forward import BoundaryOpMatrix
from .grids import make_kgrid, make_zgrid
from .phantoms import ConductivityImage
from .scattering import ScatteringField

logger = logging.getLogger(__name__)


def _paths(path) -> tuple[Path, Path]:
    p = Path(path)
    if p.suffix == ".json":
        p = p.with_suffix(".bin")
    elif p.suffix != ".bin":
        p = p.with_name(p.name + ".bin")
    return p, p.with_suffix(".json")


def write_field(path, planes: np.ndarray, header: dict) -> Path:
    """Write ``planes`` (shape ``(P, ...)``) and its header; returns the .bin path."""
    binp, jsonp = _paths(path)
    binp.parent.mkdir(parents=True, exist_ok=True)
    arr = np.ascontiguousarray(planes, dtype="<f8")
    arr.tofile(binp)
    meta = dict(header, shape=list(arr.shape), dtype="float64-le")
    jsonp.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return binp


def read_field(path) -> tuple[np.ndarray, dict]:
    binp, jsonp = _paths(path)
    meta = json.loads(jsonp.read_text())
    arr = np.fromfile(binp, dtype="<f8")
    shape = tuple(meta["shape"])
    if arr.size != int(np.prod(shape)):
        raise ValueError(f"{binp} holds {arr.size} values, header expects shape {shape}")
    return arr.reshape(shape), meta


def save_image(path, image: ConductivityImage, **extra) -> Path:
    header = {"kind": "conductivity", **image.grid.header(), "background": image.background, **extra}
    return write_field(path, image.values[None], header)


def load_image(path) -> ConductivityImage:
    arr, meta = read_field(path)
    if meta.get("kind") != "conductivity":
        raise ValueError(f"{path} is not a conductivity image")
    grid = make_zgrid(meta["ell"], meta["s"])
    return ConductivityImage(grid, arr[0].copy(), float(meta.get("background", 1.0)))


def save_scattering(path, scat: ScatteringField, **extra) -> Path:
    planes = np.stack([scat.tau.real, scat.tau.imag, scat.valid.astype(float)])
    return write_field(path, planes, {"kind": "scattering", **scat.header(), **extra})


def load_scattering(path) -> ScatteringField:
    arr, meta = read_field(path)
    if meta.get("kind") != "scattering":
        raise ValueError(f"{path} is not a scattering field")
    kg = make_kgrid(meta["m"], meta["R"], meta["R_tilde"])
    return ScatteringField(kg, arr[0] + 1j * arr[1], arr[2] > 0.5)


def save_boundary_op(path, op: BoundaryOpMatrix) -> Path:
    binp = write_field(path, op.matrix[None], {"kind": op.kind, **op.header()})
    with open(binp.with_suffix(".csv"), "w", newline="") as fh:
        csv.writer(fh).writerows(op.matrix.tolist())
    return binp


def load_boundary_op(path) -> BoundaryOpMatrix:
    arr, meta = read_field(path)
    if meta.get("kind") not in ("ND", "DN"):
        raise ValueError(f"{path} is not an ND/DN matrix")
    return BoundaryOpMatrix(meta["kind"], arr[0].copy(), int(meta["N"]), float(meta["eta"]),
                            meta.get("seed"), meta.get("mesh_level"))


def save_sinogram(path, sino: Sinogram) -> tuple[Path, Path]:
    base = Path(path)
    base.parent.mkdir(parents=True, exist_ok=True)
    out = []
    for part, vals in (("re", sino.values.real), ("im", sino.values.imag)):
        p = base.with_name(f"{base.stem}_{part}.csv")
        np.savetxt(p, vals, delimiter=",", fmt="%.17g")
        out.append(p)
    return tuple(out)


def emit_preview(image: ConductivityImage, color_scale: tuple[float, float], path,
                 cmap: str = "jet") -> Path:
    """PNG with one pixel per grid point on a fixed colour scale; values
    outside the scale are clamped."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    v = np.asarray(image.values, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("image contains non-finite values")
    lo, hi = map(float, color_scale)
    if not hi > lo:
        raise ValueError("color scale must have max > min")
    if v.min() < lo or v.max() > hi:
        logger.warning("preview values [%.3g, %.3g] clamped to [%.3g, %.3g]", v.min(), v.max(), lo, hi)
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    plt.imsave(p, np.clip(v, lo, hi), vmin=lo, vmax=hi, cmap=cmap, origin="lower")
    return p


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
