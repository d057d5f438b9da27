"""Pressure function, cumulants, Cramer series and Legendre transform.

For the rank-one law a*J with a in {1/e, e}, Lambda(s) = s log 2 + log cosh s
in closed form, so every derived quantity can be compared with its exact
value.
"""

import math

import numpy as np

from prodlimits.law import law_rank_one
from prodlimits.spectral import (
    cramer_series,
    cumulants_from_pressure,
    legendre_transform,
    pressure_curve,
)

law = law_rank_one()
curve = pressure_curve(law)
exact = np.array([s * math.log(2) + math.log(math.cosh(s)) for s in curve.s_grid])
print(f"max |Lambda - closed form| over |s| <= 0.5: {np.max(np.abs(curve.lambda_vals - exact)):.1e}")
print(f"half-resolution refinement gap: {curve.refinement_gap:.1e}")

cu = cumulants_from_pressure(curve)
print("\ncumulant  fitted        exact")
for k, (g, e) in enumerate(zip(cu.gamma, (math.log(2), 1.0, 0.0, -2.0, 0.0)), start=1):
    print(f"gamma_{k}   {g:+.6f}    {e:+.6f}")

z = cramer_series(cu)
print(f"\nCramer series: zeta(t) = {z.c0:.2e} + ({z.c1:.5f}) t + ({z.c2:.2e}) t^2")
print("exact linear coefficient: -1/12 =", -1 / 12)

wide = pressure_curve(law, s_grid=np.linspace(-1.5, 1.5, 61), refine_check=False)
q = math.log(2) + math.tanh(1.0)
print(f"\nLegendre transform at q = {q:.5f}: {legendre_transform(wide, q):.6f}"
      f" (exact {math.tanh(1.0) - math.log(math.cosh(1.0)):.6f})")
