"""The whole iterated reconstruction on noisy data.

Runs a short version of the loop (smaller grids than the defaults) on the
heart-and-lungs phantom with 0.1% noise and prints the error of every stage.
Takes well under a minute on one core.

    python3 demos/03_full_reconstruction.py [passes]
"""
import logging
import sys

from tvdbar.forward import simulate_dn
from tvdbar.phantoms import build_phantom, heart_and_lungs
from tvdbar.pipeline import PipelineConfig, run_pipeline

logging.basicConfig(level=logging.INFO, format="%(name)s %(message)s")

cfg = PipelineConfig(R=4.0, R_tilde=8.0, J=int(sys.argv[1]) if len(sys.argv) > 1 else 2,
                     K=4, lam=0.1, eta=1e-3, seed=1, ell=6, m=5, mesh_level=3, budget=30)
zg, _ = cfg.grids()
truth = build_phantom(heart_and_lungs(), zg)
dn = simulate_dn(heart_and_lungs(), cfg.eta, cfg.seed, cfg.N, mesh_level=cfg.mesh_level)
res = run_pipeline(dn, cfg, truth)

print(f"\n{'pass':>4} {'stage':>6} {'L2':>7} {'SSIM':>7}")
for r in res.records:
    for stage in ("db", "tv", "ce"):
        print(f"{r.j:>4} {stage:>6} {r.metrics[stage + '_l2']:7.4f} {r.metrics[stage + '_ssim']:7.4f}")
print("finished normally" if res.ok else f"stopped early: {res.failure}")
