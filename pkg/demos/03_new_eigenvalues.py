"""
New eigenvalues of a point-scatterer torus
==========================================

Each scatterer adds one branch to the secular matrix.  The branches increase
between consecutive Laplacian eigenvalues, so every gap holds at most N new
eigenvalues and each one is found by bracketing a single branch.
"""

import math

import numpy as np

from pointscatter.geometry import FlatTorus
from pointscatter.secular import ScattererSet, SecularSystem, old_eigenspace_survivors

torus = FlatTorus(2, 2 * math.pi)
rng = np.random.default_rng(0)
scatterers = ScattererSet(torus, rng.uniform(0, torus.L, size=(4, 2)), t=0.0)
system = SecularSystem(scatterers, lam_max=60.0)

for j in range(8):
    a, b = torus.gap(j)
    roots = system.find_new_eigenvalues(j)
    print(f"gap {j}: ({a:5.1f}, {b:5.1f})  ", "  ".join(f"{p.lam:.6f}" for p in roots))

# The branch eigenvalues across one gap: each crosses zero at most once,
# and those tied to the next level blow up just below it.
grid, mu = system.scan(5, points=9)
print("\nbranches over gap 5")
for lam, row in zip(grid, mu):
    print(f"{lam:8.4f}", np.array2string(row, precision=3, suppress_small=True))

# Old eigenvalues survive only through eigenfunctions vanishing at every scatterer.
print("\nsurvivors at lambda=1 with one scatterer:", old_eigenspace_survivors(ScattererSet(torus, [(0.7, 1.9)]), 1))
print("survivors at lambda=1 with four:", old_eigenspace_survivors(scatterers, 1))
