"""Where the projective chain lives.

With all atoms strictly positive, the chain stays a fixed distance away
from the boundary after one step, so the stationary tail near the boundary
is empty. An atom with a zero entry lets mass reach the boundary, and the
tail then decays like a power of t.
"""

import numpy as np

from prodlimits.law import law_condition_report, law_two_atoms, make_law
from prodlimits.semigroup import basis
from prodlimits.simulate import stationary_sample_fast
from prodlimits.stats import regularity_exponent

law = law_two_atoms()
rep = law_condition_report(law)
pts = stationary_sample_fast(law, burn_in=200, count=100_000, seed=1)
print(f"two-atom law: column constant {rep.a3_constant}, guaranteed margin {rep.epsilon:.4f}")
print(f"smallest <e1, x> over 10^5 stationary samples: {pts[:, 0].min():.4f}")
reg = regularity_exponent(pts, basis(2, 0))
print(f"regularity report: alpha = {reg.alpha} (empty tail), gap = {reg.gap:.4f}")

boundary = make_law({"kind": "atoms", "atoms": [[[0.2, 0.0], [1.0, 1.0]], [[2, 1], [1, 2]]],
                     "weights": [0.5, 0.5]})
pts = stationary_sample_fast(boundary, burn_in=200, count=100_000, seed=2)
reg = regularity_exponent(pts, basis(2, 0))
print(f"\nlaw with a zero entry: fitted tail exponent alpha = {reg.alpha:.3f}")
print("      t      tail")
for t, p in list(zip(reg.t_grid, reg.tail))[::5]:
    print(f"  {t:.1e}  {p:.5f}")
print("tail non-decreasing in t:", bool(np.all(np.diff(reg.tail) >= 0)))
