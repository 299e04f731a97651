"""
Looking at one eigenfunction
============================

A new eigenfunction is a combination of Green's functions centred on the
scatterers.  Its norm follows from the derivative of the secular matrix, and
its Fourier matrix elements come straight from the mode coefficients.
"""

import math

import numpy as np

from pointscatter.geometry import FlatTorus
from pointscatter.greens import GreensEvaluator
from pointscatter.secular import ScattererSet, SecularSystem
from pointscatter.wavefield import Eigenfunction, Mollifier

torus = FlatTorus(2, 2 * math.pi)
positions = [(0.5, 0.7), (2.9, 1.3), (4.1, 4.6), (1.2, 5.5)]
system = SecularSystem(ScattererSet(torus, positions), GreensEvaluator(torus, 4000))
pair = system.find_new_eigenvalues(20)[0]
ef = Eigenfunction(system, pair)
print(f"lambda = {ef.lam:.8f}")

# Three views of the norm: quadratic form, Parseval sum, grid.
F, cell = ef.truncated_grid(256)
print(f"v^T A' v     = {ef.norm_squared():.8f}")
print(f"sum |w|^2    = {ef.mode_norm_squared():.8f}  (+ tail {ef.mode_norm_tail():.1e})")
print(f"grid |psi|^2 = {np.sum(F * F) * cell * ef.norm_squared():.8f}")

for z in [(0, 0), (1, 0), (1, 1), (2, 1)]:
    print(f"<e_{z} psi, psi> = {ef.matrix_element(z):.6f}")

# Pointwise values keep the logarithmic spike at each scatterer.
for r in (1e-1, 1e-2, 1e-3):
    print(f"psi at distance {r:g} from x_1: {ef.evaluate(np.array(positions[0]) + (r, 0)):.5f}")

chi = Mollifier(0.25)
print("smoothed amplitude at (3.3, 3.1):", round(ef.smoothed_amplitude(chi, (3.3, 3.1)), 5))

diag = ef.localization_diagnostics(128)
print(f"IPR {diag.ipr:.4f} (uniform would be {1 / torus.volume:.4f})")
