"""Positive matrices act on the positive sphere and contract it.

We look at the Hilbert distance between two directions, watch it shrink
under repeated action of a positive matrix, and bracket the Perron root
with Collatz-Wielandt bounds that tighten as the direction converges.
"""

import math

import numpy as np

from prodlimits.semigroup import (
    basis,
    center,
    collatz_wielandt_bounds,
    hilbert_distance,
    matrix_functionals,
    project_act,
    spectral_radius_pf,
)

g = np.array([[2.0, 1.0], [1.0, 2.0]])
h = np.array([[1.0, 2.0], [3.0, 1.0]])

print("Hilbert distance between (1,1)/sqrt2 and (2,1)/sqrt5:",
      hilbert_distance(center(2), np.array([2.0, 1.0]) / math.sqrt(5)))
print("between the two axes:", hilbert_distance(basis(2, 0), basis(2, 1)))

# Two boundary points are pulled together geometrically fast.
x, y = basis(2, 0), basis(2, 1)
print("\nstep  d(h^k e1, h^k e2)")
for k in range(1, 7):
    x, _ = project_act(h, x)
    y, _ = project_act(h, y)
    print(f"{k:4d}  {hilbert_distance(x, y):.3e}")

mf = matrix_functionals(h)
print(f"\n||h|| = {mf.op_norm:.6f}, iota(h) = {mf.iota:.6f}, N(h) = {mf.big_n:.6f}")

# Collatz-Wielandt bounds tighten along the power iteration.
v = np.array([0.9, 0.1])
v /= np.linalg.norm(v)
print("\niteration  lower      upper")
for k in range(6):
    lo, hi = collatz_wielandt_bounds(h, v)
    print(f"{k:9d}  {lo:.6f}  {hi:.6f}")
    v, _ = project_act(h, v)
rho, _ = spectral_radius_pf(h)
print(f"Perron root {rho:.12f}, exact 1 + sqrt 6 = {1 + math.sqrt(6):.12f}")
print(f"symmetric atom: rho = {spectral_radius_pf(g)[0]:.12f}")
