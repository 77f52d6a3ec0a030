"""From a phantom to its scattering transform, two ways.

We simulate ND/DN data for the heart-and-lungs phantom with the FEM solver,
extract the scattering transform from the boundary CGO traces, and compare it
with the transform computed directly from the Beltrami coefficient of the
phantom (the "true" transform, only available in simulation).

    python3 demos/01_forward_and_scattering.py
"""
import numpy as np

from tvdbar.beltrami import scattering_from_mu
from tvdbar.boundary_cgo import extract_tau
from tvdbar.forward import simulate_dn
from tvdbar.grids import make_kgrid, make_zgrid
from tvdbar.phantoms import beltrami_mu, build_phantom, heart_and_lungs

zg = make_zgrid(6, 2.0)
kg = make_kgrid(5, 4.0, 8.0)
spec = heart_and_lungs()

# Noise-free DN map from the FEM model, then tau on |k| < 3
dn = simulate_dn(spec, 0.0, 0)
print(f"DN matrix {dn.matrix.shape}, symmetric to {np.abs(dn.matrix - dn.matrix.T).max():.1e}")
from_data = extract_tau(dn, kg, 3.0)

# The same transform from the image itself
mask = from_data.valid
truth = build_phantom(spec, zg)
golden = scattering_from_mu(beltrami_mu(truth), zg, kg, mask=mask)

diff = np.linalg.norm((from_data.tau - golden.tau)[mask]) / np.linalg.norm(golden.tau[mask])
print(f"{mask.sum()} k-points, relative distance data vs image: {diff:.4f}")

# Radial profile: |tau| decays slowly, which is why a small cutoff blurs edges
r = np.abs(kg.points[mask])
for lo in np.arange(0.5, 3.0, 0.5):
    sel = (r >= lo) & (r < lo + 0.5)
    print(f"  |k| in [{lo:.1f}, {lo + 0.5:.1f}): mean |tau| data {np.abs(from_data.tau[mask][sel]).mean():.4f}"
          f"  image {np.abs(golden.tau[mask][sel]).mean():.4f}")
