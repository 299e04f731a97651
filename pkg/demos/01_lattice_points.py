"""
Counting lattice points in discs and thin annuli
================================================

The number of integer vectors with |xi|^2 <= X is pi X up to a small
remainder.  Thin annuli around a large circle decide which Fourier modes an
eigenfunction can use, which is where "generic" gaps come from.
"""

import math

import numpy as np

from pointscatter.arith import annulus_points, circle_law_residual, count_lattice_points, is_generic_gap
from pointscatter.geometry import FlatTorus

# Small cases by hand: the 9 points of the 3x3 block, the 81 points of radius 5.
print("N(2) =", count_lattice_points(2), " N(25) =", count_lattice_points(25))

# The remainder grows far more slowly than the area.
for X in np.logspace(2, 6, 5):
    r = circle_law_residual(X)
    print(f"X = {X:9.0f}   N(X) - pi X = {r:9.2f}   ratio to X^0.35 = {r / X**0.35:6.2f}")

# Forty points lie within 5 of the circle of radius 10.
A = annulus_points((0, 0), 100, 5)
print("points in the annulus around |xi|^2 = 100:", len(A))

# A gap is generic when the annulus at its midpoint, shifted by zeta,
# misses the unshifted annulus.  Count them in a run of gaps.
torus = FlatTorus(2, 2 * math.pi)
flags = [is_generic_gap(torus, j, 0.17, [(1, 0)]) for j in range(400, 500)]
print("generic gaps among 400..499:", sum(flags))
