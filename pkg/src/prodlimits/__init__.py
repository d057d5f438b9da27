"""Limit theorems for products of random positive matrices, checked numerically.

Modules
-------
semigroup
    Positive matrices acting on the positive sphere: metric, action, norms,
    Perron root, condition checks.
law
    Finite-support matrix laws, recipes, sampling and condition reports.
simulate
    Overflow-safe simulation of matrix products and the projective chain.
spectral
    Discretized transfer operator, pressure, cumulants, Cramer series,
    Legendre transform.
tilted
    Exact importance sampling under the exponential change of measure.
stats
    Berry-Esseen gaps, moderate deviation ratios and rates, variance
    formulas, regularity of the stationary law.
cli
    ``prodlimits`` command-line runner.
"""

__version__ = "0.1.0"

from .law import (  # noqa: E402
    CallbackLaw,
    MatrixLaw,
    law_condition_report,
    law_identity,
    law_rank_one,
    law_symmetric,
    law_two_atoms,
    make_law,
)
from .simulate import SimConfig, run_batch, run_trajectory, stationary_sample  # noqa: E402
from .spectral import (  # noqa: E402
    build_grid,
    cramer_zeta,
    cumulants_from_pressure,
    legendre_transform,
    pressure_curve,
    spectral_triple,
)
from .streams import CounterStream, split  # noqa: E402
