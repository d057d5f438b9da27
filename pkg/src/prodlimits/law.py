"""Matrix laws: finite-support laws built from recipes, and callback laws.

A recipe is a plain dict that serializes to JSON::

    {"kind": "atoms", "atoms": [[[2, 1], [1, 2]], [[1, 2], [3, 1]]], "weights": [0.5, 0.5]}
    {"kind": "rank_one", "dim": 2, "scalars": [0.3678..., 2.718...], "weights": [0.5, 0.5]}
    {"kind": "a3_random", "dim": 3, "C": 4.0, "n_atoms": 5, "seed": 1}

Floats are written with ``repr`` so a recipe round-trips exactly.
"""

import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from .semigroup import (
    as_matrix,
    column_constant,
    epsilon_c_convert,
    matrix_functionals,
    spectral_radius_pf,
)
from .streams import CounterStream

WEIGHT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class MatrixLaw:
    """Finite-support law on non-negative d x d matrices.

    Attributes
    ----------
    atoms : ndarray, shape (k, d, d)
    weights : ndarray, shape (k,)
        Strictly positive, summing to one.
    recipe : dict or None
        The recipe the law was built from, kept for manifests.
    """

    atoms: np.ndarray
    weights: np.ndarray
    recipe: Optional[dict] = field(default=None, repr=False)

    def __post_init__(self):
        atoms = np.array([as_matrix(a) for a in self.atoms])
        if atoms.ndim != 3 or len(atoms) == 0:
            raise ValueError("a law needs at least one square atom of common size")
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (len(atoms),):
            raise ValueError("one weight per atom required")
        if np.any(w <= 0):
            raise ValueError("weights must be strictly positive")
        if abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        atoms.setflags(write=False)
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self):
        return self.atoms.shape[1]

    @property
    def cum_weights(self):
        c = np.cumsum(self.weights)
        c[-1] = 1.0
        return c

    def fingerprint(self):
        """sha256 of the atoms and weights in canonical JSON form."""
        payload = json.dumps(
            {"atoms": self.atoms.tolist(), "weights": self.weights.tolist()},
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()


@dataclass(frozen=True, eq=False)
class CallbackLaw:
    """Law given by a sampler ``rng -> matrix``; Monte Carlo only.

    Condition reports for such laws are sample based and flagged approximate.
    """

    dim: int
    sampler: Callable

    def fingerprint(self):
        return f"callback:{getattr(self.sampler, '__qualname__', repr(self.sampler))}"


def _a3_random_atoms(d, C, n_atoms, seed):
    rng = CounterStream(seed, 0)
    atoms = []
    for _ in range(n_atoms):
        g = np.empty((d, d))
        for j in range(d):
            base = 0.5 + 1.5 * rng.random()
            # entries base * C**u with u in [0, 1]; ratio within a column <= C
            g[:, j] = [base * C ** rng.random() for _ in range(d)]
        atoms.append(g)
    return atoms


def make_law(recipe):
    """Build a :class:`MatrixLaw` from a recipe dict (see module docstring)."""
    kind = recipe.get("kind")
    if kind == "atoms":
        atoms = recipe["atoms"]
        weights = recipe.get("weights")
        if weights is None:
            weights = [1.0 / len(atoms)] * len(atoms)
    elif kind == "rank_one":
        d = int(recipe["dim"])
        scalars = recipe["scalars"]
        weights = recipe.get("weights") or [1.0 / len(scalars)] * len(scalars)
        if any(a <= 0 for a in scalars):
            raise ValueError("rank-one scalars must be positive")
        atoms = [a * np.ones((d, d)) for a in scalars]
    elif kind == "a3_random":
        d = int(recipe["dim"])
        C = float(recipe["C"])
        if C < 1:
            raise ValueError("C must be >= 1")
        n_atoms = int(recipe.get("n_atoms", 2))
        atoms = _a3_random_atoms(d, C, n_atoms, int(recipe.get("seed", 0)))
        weights = recipe.get("weights") or [1.0 / n_atoms] * n_atoms
    else:
        raise ValueError(f"unknown law recipe kind {kind!r}")
    atoms = [np.asarray(a, dtype=float) for a in atoms]
    shapes = {a.shape for a in atoms}
    if len(shapes) != 1:
        raise ValueError(f"atoms have different shapes: {sorted(shapes)}")
    return MatrixLaw(np.array(atoms), np.asarray(weights, dtype=float), recipe=dict(recipe))


def law_to_recipe(law):
    """Explicit-atom recipe reproducing ``law`` exactly."""
    return {
        "kind": "atoms",
        "atoms": law.atoms.tolist(),
        "weights": law.weights.tolist(),
    }


def dumps_recipe(recipe):
    return json.dumps(recipe, sort_keys=True)


def loads_recipe(text):
    return json.loads(text)


# canonical laws used throughout the tests and demos

def law_symmetric():
    """Point mass at [[2, 1], [1, 2]]; deterministic products, zero variance."""
    return make_law({"kind": "atoms", "atoms": [[[2.0, 1.0], [1.0, 2.0]]], "weights": [1.0]})


def law_two_atoms():
    """[[2, 1], [1, 2]] and [[1, 2], [3, 1]] with probability 1/2 each."""
    return make_law({
        "kind": "atoms",
        "atoms": [[[2.0, 1.0], [1.0, 2.0]], [[1.0, 2.0], [3.0, 1.0]]],
        "weights": [0.5, 0.5],
    })


def law_rank_one(d=2):
    """a J with J the all-ones matrix and a in {1/e, e} equally likely."""
    return make_law({
        "kind": "rank_one",
        "dim": d,
        "scalars": [math.exp(-1.0), math.exp(1.0)],
        "weights": [0.5, 0.5],
    })


def law_identity(d=2):
    return make_law({"kind": "atoms", "atoms": [np.eye(d).tolist()], "weights": [1.0]})


def sample_index(law, rng):
    """Atom index drawn by inverse CDF on one uniform from ``rng``."""
    u = rng.random()
    i = int(np.searchsorted(law.cum_weights, u, side="right"))
    return min(i, len(law.weights) - 1)


def sample_matrix(law, rng):
    """One draw from ``law``. ``rng`` needs a ``random()`` method."""
    if isinstance(law, CallbackLaw):
        return np.asarray(law.sampler(rng), dtype=float)
    return law.atoms[sample_index(law, rng)]


def _real_gcd_spacing(values, tol, max_den):
    # Common spacing s with every value an integer multiple of s, or None.
    vals = sorted((abs(v) for v in values if abs(v) > tol), reverse=True)
    if not vals:
        return None
    spacing = vals[-1]
    for v in vals:
        r = Fraction(v / spacing).limit_denominator(max_den)
        if abs(v - float(r) * spacing) > tol * max(1.0, v):
            return None
        spacing /= r.denominator
        if spacing < vals[-1] / max_den:
            return None
    for v in vals:
        k = round(v / spacing)
        if abs(v - k * spacing) > tol * max(1.0, v):
            return None
    return spacing


def arithmeticity_heuristic(law, depth=4, tol=1e-9, max_den=1000):
    """Lattice check on log spectral radii of short products.

    Collects ``log rho(g)`` for all strictly positive products of at most
    ``depth`` atoms and looks for a common spacing by continued fractions
    (denominators up to ``max_den``). A common spacing means the values
    generate a discrete subgroup of R, the non-dense case.

    This is a heuristic. It can miss arithmetic laws whose lattice only shows
    up through longer products.

    Returns
    -------
    bool or None
        True when a lattice is detected (warning), False when the values look
        incommensurable, None when no strictly positive product exists up to
        ``depth`` (inconclusive).
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    k = len(law.atoms)
    logs = []
    for length in range(1, depth + 1):
        for word in itertools.product(range(k), repeat=length):
            g = np.eye(law.dim)
            for i in word:
                g = law.atoms[i] @ g
            if np.all(g > 0):
                rho, _ = spectral_radius_pf(g)
                logs.append(math.log(rho))
    if not logs:
        return None
    if all(abs(v) <= tol for v in logs):
        return True
    return _real_gcd_spacing(logs, tol, max_den) is not None


@dataclass(frozen=True)
class LawConditionReport:
    eta_estimate: Optional[float]
    a3_constant: Optional[float]
    harmonic_ok: bool
    delta: Optional[float]
    arithmetic_warning: Optional[bool]
    allowable: bool
    positive_product: bool
    approximate: bool = False
    dim: int = 2

    @property
    def epsilon(self):
        """Interior margin guaranteed by the column constant, if any."""
        if self.a3_constant is None:
            return None
        return epsilon_c_convert("C->eps", self.a3_constant, self.dim)

    def to_dict(self):
        return {
            "eta_estimate": self.eta_estimate,
            "a3_constant": self.a3_constant,
            "harmonic_ok": self.harmonic_ok,
            "delta": self.delta,
            "arithmetic_warning": self.arithmetic_warning,
            "allowable": self.allowable,
            "positive_product": self.positive_product,
            "approximate": self.approximate,
            "epsilon": self.epsilon,
        }


def _tail_eta(samples):
    # Hill estimate of the tail index of N(g); eta = min(1, index/2)
    x = np.sort(np.asarray(samples))[::-1]
    x = x[np.isfinite(x)]
    k = max(10, len(x) // 20)
    if len(x) <= k or x[k] <= 0:
        return None
    hill = np.mean(np.log(x[:k] / x[k]))
    if hill <= 0:
        return 1.0
    return float(min(1.0, 0.5 / hill))


def law_condition_report(law, depth=4, samples=10_000, seed=0):
    """Moment, positivity, column and harmonic-moment conditions of ``law``.

    For finite-support laws every moment is finite, so the exponential moment
    exponent is reported as 1; the harmonic-moment condition holds (with
    delta = 1) exactly when all atom entries are positive. Callback laws get
    sample-based estimates with ``approximate=True``.
    """
    if isinstance(law, CallbackLaw):
        rng = CounterStream(seed, 0)
        draws = [sample_matrix(law, rng) for _ in range(samples)]
        big_n = [matrix_functionals(g).big_n for g in draws]
        ccs = [column_constant(g) for g in draws]
        allowable = all(np.all((g > 0).any(0)) and np.all((g > 0).any(1)) for g in draws)
        return LawConditionReport(
            eta_estimate=_tail_eta(big_n),
            a3_constant=None if any(c is None for c in ccs) else max(ccs),
            harmonic_ok=all(np.all(g > 0) for g in draws),
            delta=None,
            arithmetic_warning=None,
            allowable=allowable,
            positive_product=any(np.all(g > 0) for g in draws),
            approximate=True,
            dim=law.dim,
        )
    ccs = [column_constant(g) for g in law.atoms]
    a3 = None if any(c is None for c in ccs) else max(ccs)
    harmonic = bool(np.all(law.atoms > 0))
    warn = arithmeticity_heuristic(law, depth=depth)
    allowable = all(
        np.all((g > 0).any(0)) and np.all((g > 0).any(1)) for g in law.atoms
    )
    return LawConditionReport(
        eta_estimate=1.0,
        a3_constant=a3,
        harmonic_ok=harmonic,
        delta=1.0 if harmonic else None,
        arithmetic_warning=warn,
        allowable=bool(allowable),
        positive_product=warn is not None,
        dim=law.dim,
    )
