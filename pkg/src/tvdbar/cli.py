"""Command-line front end.

Subcommands::

    simulate     phantom -> DN matrix (+ truth image)
    scatter      DN data or conductivity -> scattering field on a k-mask
    reconstruct  scattering field -> D-bar conductivity
    segment      conductivity -> piecewise-constant conductivity
    enhance      segmented conductivity + DN data -> contrast-adjusted conductivity
    run          full iterated reconstruction from a JSON config
    metrics      recompute metrics.csv from the images written by ``run``

Exit status is 0 on success, 2 for bad input or configuration and 3 for a
numerical failure (the failing stage is printed on stderr).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

from . import __version__

logger = logging.getLogger("tvdbar")

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

METRIC_COLUMNS = ("db_l2", "tv_l2", "ce_l2", "db_ssim", "tv_ssim", "ce_ssim")


class ConfigError(ValueError):
    pass


class NumericalFailure(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


def parse_config(path):
    """Read a JSON pipeline config; absent keys take their defaults and unknown
    keys are rejected."""
    from .pipeline import PipelineConfig

    p = Path(path)
    try:
        raw = json.loads(p.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file {p} not found") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{p}: expected a JSON object")
    try:
        return PipelineConfig.from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{p}: {exc}") from exc


def _load_phantom(arg):
    from .phantoms import PhantomSpec, heart_and_lungs, pipeline

    builtin = {"heart_and_lungs": heart_and_lungs, "pipeline": pipeline}
    if arg in builtin:
        return builtin[arg]()
    try:
        spec = PhantomSpec.load(arg)
        spec.validate()
    except FileNotFoundError as exc:
        raise ConfigError(f"phantom file {arg} not found") from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid phantom {arg}: {exc}") from exc
    return spec


def _parse_pair(text: str, what: str) -> tuple[float, float]:
    try:
        a, b = (float(v) for v in text.split(":"))
    except ValueError as exc:
        raise ConfigError(f"{what} must look like A:B, got {text!r}") from exc
    return a, b


def _kmask(spec: str, kgrid):
    import numpy as np

    parts = spec.split(":")
    r = np.abs(kgrid.points)
    try:
        if parts[0] == "disc" and len(parts) == 2:
            return r < float(parts[1])
        if parts[0] == "annulus" and len(parts) == 3:
            return (r >= float(parts[1])) & (r < float(parts[2]))
    except ValueError:
        pass
    raise ConfigError(f"k-mask must be disc:R or annulus:R0:R1, got {spec!r}")


def _write_manifest(out: Path, command: str, params: dict, inputs: list, outputs: list,
                    timings: dict) -> Path:
    from .io import sha256

    manifest = {
        "tool": "tvdbar",
        "version": __version__,
        "command": command,
        "parameters": params,
        "inputs": {str(p): sha256(p) for p in inputs},
        "outputs": {str(Path(p).relative_to(out)) if Path(p).is_relative_to(out) else str(p): sha256(p)
                    for p in sorted(outputs, key=str)},
        "timings_s": {k: round(v, 3) for k, v in timings.items()},
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _with_sidecars(paths):
    out = []
    for p in paths:
        p = Path(p)
        out.append(p)
        for ext in (".json", ".csv"):
            q = p.with_suffix(ext)
            if p.suffix == ".bin" and q.exists():
                out.append(q)
    return out


# -- subcommands ----------------------------------------------------------------

def cmd_simulate(args) -> int:
    from .forward import simulate_dn
    from .grids import make_zgrid
    from .io import emit_preview, save_boundary_op, save_image
    from .phantoms import build_phantom

    if args.noise < 0:
        raise ConfigError("noise level must be nonnegative")
    spec = _load_phantom(args.phantom)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    dn = simulate_dn(spec, args.noise, args.seed, args.N, mesh_level=args.mesh_level)
    t_sim = time.perf_counter() - t0
    written = [save_boundary_op(out / "dn.bin", dn)]
    truth = build_phantom(spec, make_zgrid(args.ell, args.s))
    written.append(save_image(out / "truth.bin", truth, phantom=spec.name))
    lo, hi = float(truth.values.min()), float(truth.values.max())
    written.append(emit_preview(truth, (lo, hi if hi > lo else lo + 1), out / "truth.png"))
    spec.dump(out / "phantom.json")
    written.append(out / "phantom.json")
    _write_manifest(out, "simulate", vars_clean(args), [], _with_sidecars(written),
                    {"simulate": t_sim})
    print(out / "dn.bin")
    return 0


def cmd_scatter(args) -> int:
    import numpy as np

    from .beltrami import BeltramiSolver
    from .boundary_cgo import extract_tau
    from .grids import make_kgrid, make_zgrid
    from .io import load_boundary_op, load_image, read_field, save_scattering
    from .phantoms import beltrami_mu
    from .scattering import ScatteringField

    kg = make_kgrid(args.m, args.R, args.R_tilde)
    if args.dn:
        if args.kmask is not None:
            raise ConfigError("--kmask is not used with --dn; data are computed on |k| < R")
        scat = extract_tau(load_boundary_op(args.dn), kg, args.R)
    else:
        if args.sigma:
            img = load_image(args.sigma)
            mu, grid = beltrami_mu(img), img.grid
        elif args.mu:
            arr, meta = read_field(args.mu)
            grid = make_zgrid(meta["ell"], meta["s"])
            mu = arr[0]
        else:
            raise ConfigError("one of --dn, --sigma or --mu is required")
        mask = _kmask(args.kmask or f"disc:{args.R_tilde}", kg)
        ks = kg.points[mask]
        order = np.argsort(np.abs(ks), kind="stable")
        vals = np.zeros(ks.shape, complex)
        vals[order] = BeltramiSolver(mu, grid).tau(ks[order])
        tau = np.zeros(kg.shape, complex)
        tau[mask] = vals
        tau[kg.origin] = 0.0
        scat = ScatteringField(kg, tau, mask)
    print(save_scattering(args.out, scat))
    return 0


def cmd_reconstruct(args) -> int:
    from .dbar import reconstruct_sigma
    from .grids import make_zgrid
    from .io import emit_preview, load_scattering, save_image

    scat = load_scattering(args.scattering)
    if args.cutoff > scat.kgrid.R_tilde:
        raise ConfigError(f"cutoff {args.cutoff} exceeds the k-grid radius {scat.kgrid.R_tilde}")
    img = reconstruct_sigma(scat.truncated(args.cutoff), make_zgrid(args.ell, args.s), args.cutoff)
    print(save_image(args.out, img, cutoff=args.cutoff))
    if args.preview:
        emit_preview(img, _parse_pair(args.scale, "--scale"), args.preview)
    return 0


def cmd_segment(args) -> int:
    from .io import load_image, save_image
    from .tv_seg import segment

    img = load_image(getattr(args, "in"))
    seg = segment(img, args.K, args.lam, args.s_param, seed=args.seed)
    print(save_image(args.out, seg.image, K=args.K, lam=args.lam))
    return 0


def cmd_enhance(args) -> int:
    import csv

    from .contrast import ContrastBounds, enhance
    from .io import load_boundary_op, load_image, save_image

    c, C = _parse_pair(args.bounds, "--bounds")
    bounds = ContrastBounds(c, C)
    img = load_image(getattr(args, "in"))
    dn = load_boundary_op(args.data)
    res = enhance(img, dn, bounds, args.budget, args.rho)
    path = save_image(args.out, res.image, s=res.s, t=res.t, discrepancy=res.value)
    with open(Path(path).with_name(Path(path).stem + "_samples.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "t", "discrepancy"])
        w.writerows(res.samples)
    print(path)
    return 0


def write_metrics_csv(path, rows) -> Path:
    """``rows``: iterable of ``(j, metrics_dict)``."""
    lines = ["j," + ",".join(METRIC_COLUMNS)]
    for j, m in rows:
        lines.append(f"{j}," + ",".join(f"{m[c]:.10f}" for c in METRIC_COLUMNS))
    p = Path(path)
    p.write_text("\n".join(lines) + "\n")
    return p


def cmd_run(args) -> int:
    from .forward import simulate_dn
    from .io import (emit_preview, load_boundary_op, load_image, save_boundary_op,
                     save_image, save_scattering)
    from .phantoms import build_phantom

    cfg = parse_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    zg, _ = cfg.grids()
    inputs, written, timings = [Path(args.config)], [], {}
    truth = None
    if args.phantom:
        spec = _load_phantom(args.phantom)
        t0 = time.perf_counter()
        dn = simulate_dn(spec, cfg.eta, cfg.seed, cfg.N, mesh_level=cfg.mesh_level)
        timings["simulate"] = time.perf_counter() - t0
        written.append(save_boundary_op(out / "dn.bin", dn))
        truth = build_phantom(spec, zg)
        if cfg.sigma0 != 1.0:
            raise ConfigError("sigma0 != 1 requires measured data (--data), not --phantom")
    elif args.data:
        dn = load_boundary_op(args.data)
        inputs.append(Path(args.data))
        if dn.kind != "DN":
            raise ConfigError("--data must hold a DN matrix")
    else:
        raise ConfigError("one of --phantom or --data is required")
    if args.truth:
        truth = load_image(args.truth)
        inputs.append(Path(args.truth))
    if truth is not None:
        written.append(save_image(out / "truth.bin", truth))

    from .pipeline import run_pipeline

    result = run_pipeline(dn, cfg, truth)
    if result.tau0 is not None:
        written.append(save_scattering(out / "tau0.bin", result.tau0))
    scale = ((float(truth.values.min()), float(truth.values.max())) if truth is not None
             else (cfg.c * cfg.sigma0, cfg.C * cfg.sigma0))
    if not scale[1] > scale[0]:
        scale = (scale[0] - 0.5, scale[0] + 0.5)
    for rec in result.records:
        d = out / f"j{rec.j}"
        for name in ("db", "tv", "ce"):
            img = getattr(rec, f"sigma_{name}")
            written.append(save_image(d / f"sigma_{name}.bin", img, j=rec.j, stage=name))
            written.append(emit_preview(img, scale, d / f"sigma_{name}.png"))
        written.append(save_scattering(d / "tau.bin", rec.tau, cutoff=rec.cutoff))
        for k, v in rec.timings.items():
            timings[f"j{rec.j}_{k}"] = v
    if truth is not None and result.records:
        written.append(write_metrics_csv(out / "metrics.csv", [(r.j, r.metrics) for r in result.records]))
    params = {"config": cfg.to_dict(), "phantom": args.phantom,
              "contrast": {r.j: list(r.contrast) for r in result.records},
              "stopped_early": result.stopped_early,
              "failure": list(result.failure) if result.failure else None}
    _write_manifest(out, "run", params, inputs, _with_sidecars(written), timings)
    if result.failure:
        raise NumericalFailure(*result.failure)
    print(out / "manifest.json")
    return 0


def cmd_metrics(args) -> int:
    from .io import load_image
    from .pipeline import relative_l2, ssim

    res = Path(args.results)
    truth = load_image(args.truth or res / "truth.bin")
    rows = []
    for d in sorted(res.glob("j*"), key=lambda p: int(p.name[1:]) if p.name[1:].isdigit() else 0):
        if not d.is_dir() or not d.name[1:].isdigit():
            continue
        m = {}
        for name in ("db", "tv", "ce"):
            img = load_image(d / f"sigma_{name}.bin")
            m[f"{name}_l2"] = relative_l2(img, truth)
            m[f"{name}_ssim"] = ssim(img, truth)
        rows.append((int(d.name[1:]), m))
    if not rows:
        raise ConfigError(f"no iteration directories under {res}")
    if args.out:
        print(write_metrics_csv(args.out, rows))
    else:
        print("j," + ",".join(METRIC_COLUMNS))
        for j, m in rows:
            print(f"{j}," + ",".join(f"{m[c]:.10f}" for c in METRIC_COLUMNS))
    return 0


# -- parser -----------------------------------------------------------------------

def vars_clean(args) -> dict:
    return {k: v for k, v in vars(args).items() if k not in ("func",)}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tvdbar", description="TV-enhanced D-bar EIT reconstruction")
    p.add_argument("--version", action="version", version=f"tvdbar {__version__}")
    p.add_argument("--threads", type=int, default=None,
                   help="cap on BLAS/FFT threads (default: $TVDBAR_THREADS or 1)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def grid_args(q):
        q.add_argument("--ell", type=int, default=7)
        q.add_argument("--s", type=float, default=2.0)

    q = sub.add_parser("simulate", help="simulate noisy DN data for a phantom")
    q.add_argument("--phantom", required=True, help="JSON phantom spec or heart_and_lungs / pipeline")
    q.add_argument("--noise", type=float, default=0.0)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--N", type=int, default=16)
    q.add_argument("--mesh-level", dest="mesh_level", type=int, default=4)
    q.add_argument("--out", required=True)
    grid_args(q)
    q.set_defaults(func=cmd_simulate)

    q = sub.add_parser("scatter", help="scattering transform from DN data or a conductivity")
    src = q.add_mutually_exclusive_group(required=True)
    src.add_argument("--dn")
    src.add_argument("--sigma")
    src.add_argument("--mu")
    q.add_argument("--kmask", default=None, help="disc:R or annulus:R0:R1 (Beltrami route)")
    q.add_argument("--m", type=int, default=6)
    q.add_argument("--R", type=float, default=5.0)
    q.add_argument("--R-tilde", dest="R_tilde", type=float, default=10.0)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_scatter)

    q = sub.add_parser("reconstruct", help="D-bar inversion of a scattering field")
    q.add_argument("--scattering", required=True)
    q.add_argument("--cutoff", type=float, required=True)
    q.add_argument("--out", required=True)
    q.add_argument("--preview", default=None)
    q.add_argument("--scale", default="0.3:2.5", help="preview colour range MIN:MAX")
    grid_args(q)
    q.set_defaults(func=cmd_reconstruct)

    q = sub.add_parser("segment", help="TV segmentation into K constant regions")
    q.add_argument("--in", required=True)
    q.add_argument("--K", type=int, default=4)
    q.add_argument("--lambda", dest="lam", type=float, default=0.1)
    q.add_argument("--s-param", dest="s_param", type=float, default=0.0)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_segment)

    q = sub.add_parser("enhance", help="contrast adjustment against DN data")
    q.add_argument("--in", required=True)
    q.add_argument("--data", required=True)
    q.add_argument("--bounds", default="0.3:2.5", help="c:C")
    q.add_argument("--budget", type=int, default=60)
    q.add_argument("--rho", type=float, default=2.0)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_enhance)

    q = sub.add_parser("run", help="full iterated reconstruction")
    q.add_argument("--config", required=True)
    q.add_argument("--out", required=True)
    q.add_argument("--phantom", default=None, help="simulate data from this phantom (also the truth)")
    q.add_argument("--data", default=None, help="DN matrix file")
    q.add_argument("--truth", default=None, help="truth image for metrics")
    q.set_defaults(func=cmd_run)

    q = sub.add_parser("metrics", help="recompute metrics.csv from run outputs")
    q.add_argument("--results", required=True)
    q.add_argument("--truth", default=None)
    q.add_argument("--out", default=None)
    q.set_defaults(func=cmd_metrics)
    return p


def _cap_threads(n: int) -> None:
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    threads = args.threads or int(os.environ.get("TVDBAR_THREADS", "1"))
    _cap_threads(threads)
    from .pipeline import NUMERICAL_ERRORS

    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"numerical failure in stage {exc.stage}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure in stage {args.command}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
