"""Exponential change of measure for finite-support laws and tail estimation.

Under the tilted dynamics at parameter ``s`` the next atom is drawn from

    p_i(x)  proportional to  w_i |g_i x|^s r_s(g_i . x)

where ``r_s`` is the right eigenvector of the discretized transfer operator,
interpolated off the grid. Each path carries the likelihood ratio
``prod_k w_{a_k} / p_{a_k}(X_{k-1})`` of the atoms actually drawn. Because
this is the ratio for the kernel that is really sampled, the estimator
``mean(W * 1{event})`` is unbiased whatever the grid error in ``r_s``; the
grid only affects its variance.
"""

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .law import CallbackLaw, MatrixLaw
from .semigroup import DegenerateActionError, as_point, center, matrix_functionals, project_act
from .simulate import (
    FLAG_DEGENERATE,
    Batch,
    _blocks,
    _empty_batch,
    _finish,
    _run_blocks,
    run_trajectory,
)
from .spectral import (
    DEFAULT_RESOLUTION,
    SpectralRangeError,
    cumulants_from_pressure,
    pressure_curve,
    spectral_triple,
)
from .streams import split

R_FLOOR = 1e-300


@dataclass(frozen=True)
class TiltedStepDistribution:
    """Atom probabilities of one tilted step.

    Attributes
    ----------
    probs : ndarray
        Renormalized probabilities, summing to one.
    raw_mass : float
        ``sum_i w_i |g_i x|^s r_s(g_i . x) / (kappa r_s(x))`` before
        renormalization; equals one for the exact eigenfunction.
    """

    probs: np.ndarray
    raw_mass: float

    @property
    def defect(self):
        return self.raw_mass - 1.0


def _tilt_masses(law, triple, x):
    # unnormalized masses w_i |g_i x|^s r(g_i . x); at s = 0 the weights themselves
    if triple.s == 0.0:
        return np.array(law.weights, dtype=float)
    ys = np.einsum("kij,j->ki", law.atoms, x)
    ny = np.linalg.norm(ys, axis=1)
    if np.any(ny == 0):
        raise DegenerateActionError("an atom maps the current state to zero")
    rv = triple.grid.interpolate(triple.r, ys)
    return law.weights * ny**triple.s * rv


def tilt_step_distribution(law, triple, x):
    """Tilted step distribution at state ``x`` for the eigen-triple ``triple``."""
    x = as_point(x)
    r_x = triple.r_at(x)
    if r_x < R_FLOOR:
        raise ArithmeticError(f"r_s(x) = {r_x} is below {R_FLOOR}")
    q = _tilt_masses(law, triple, x)
    z = q.sum()
    return TiltedStepDistribution(probs=q / z, raw_mass=float(z / (triple.kappa * r_x)))


def run_tilted_trajectory(law, triple, x0, f, n, rng):
    """One path under the tilted kernel.

    Returns
    -------
    trajectory : Trajectory
    weight : float
        Likelihood ratio of the original law against the sampled kernel
        along this path, so ``E_tilted[weight * F(path)] = E[F(path)]``.
    """
    if not isinstance(law, MatrixLaw):
        raise TypeError("tilted sampling needs a finite-support law")
    x0 = as_point(x0)
    f = as_point(f)
    d = x0.size
    m = np.eye(d)
    lognorm = 0.0
    logw = 0.0
    x = x0
    for _ in range(n):
        q = _tilt_masses(law, triple, x)
        z = 1.0 if triple.s == 0.0 else float(q.sum())
        u = rng.random() * z
        cq = np.cumsum(q)
        pick = min(int(np.searchsorted(cq, u, side="right")), len(q) - 1)
        if triple.s != 0.0:
            logw += math.log(law.weights[pick]) + math.log(z) - math.log(q[pick])
        g = law.atoms[pick]
        m = g @ m
        nrm = matrix_functionals(m).op_norm
        m = m / nrm
        lognorm += math.log(nrm)
        x, _ = project_act(g, x)
    return _finish(d, m, lognorm, x0, f, x, None, n), math.exp(logw)


def run_tilted_batch(law, triple, n, replicates, x0=None, f=None, seed=0, threads=1):
    """Tilted replicates; replicate ``i`` uses stream ``(seed, i)``.

    Returns a :class:`Batch` whose ``log_weight`` holds the log likelihood
    ratios.
    """
    if not isinstance(law, MatrixLaw):
        raise TypeError("tilted sampling needs a finite-support law")
    d = law.dim
    x0 = center(d) if x0 is None else as_point(x0)
    f = center(d) if f is None else as_point(f)
    if triple.r_at(x0) < R_FLOOR:
        raise ArithmeticError("r_s(x0) below floor")
    b = _empty_batch(n, x0, f, replicates, d, False, seed, tilted=True)

    if d == 2:
        atoms = np.ascontiguousarray(law.atoms)
        weights = np.ascontiguousarray(law.weights)
        r_grid = np.ascontiguousarray(triple.r)
        h = triple.grid.step

        def work(start, count):
            sl = slice(start, start + count)
            _kernels.tilted_block_2d(
                atoms, weights, r_grid, h, float(triple.s), x0, f, n,
                np.uint64(seed & (2**64 - 1)), start, count,
                b.log_vec_norm[sl], b.log_op_norm[sl], b.log_entry[sl], b.log_spec_rad[sl],
                b.rho_bracket_width[sl], b.x_final[sl], b.flags[sl], b.log_weight[sl],
            )

        _run_blocks(work, _blocks(replicates), threads)
    else:
        for i in range(replicates):
            t, w = run_tilted_trajectory(law, triple, x0, f, n, split(seed, i))
            for k in Batch.OBSERVABLES:
                getattr(b, k)[i] = getattr(t, k)
            b.x_final[i] = t.x_final
            b.flags[i] = t.flags
            b.rho_bracket_width[i] = t.rho_bracket_width
            b.log_weight[i] = math.log(w)
    for i in np.flatnonzero(b.flags & FLAG_DEGENERATE):
        b.errors[int(i)] = "degenerate projective action"
    return b


def solve_saddle(cumulants, q, tol=1e-8):
    """``s`` with ``Lambda'(s) = q`` on the fitted pressure polynomial, by bisection.

    Raises
    ------
    SpectralRangeError
        If ``q`` is not attained for ``|s| <= s_max``.
    """
    lo, hi = -cumulants.s_max, cumulants.s_max
    flo = float(cumulants.derivative(lo)) - q
    fhi = float(cumulants.derivative(hi)) - q
    if flo > 0 or fhi < 0:
        raise SpectralRangeError(
            f"drift {q} outside [{flo + q}, {fhi + q}] covered by |s| <= {cumulants.s_max}",
            flo + q, fhi + q,
        )
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if float(cumulants.derivative(mid)) < q:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class TailEstimate:
    """Importance-sampling estimate of ``P(observable >= threshold)``."""

    probability: float
    std_error: float
    n: int
    y: float
    threshold: float
    s_used: float
    mean_weight: float
    mean_weight_se: float
    replicates: int
    seed: int
    events: int = 0
    tail: str = "upper"

    def interval(self, k=3.0):
        """``probability +- k * std_error`` clamped to [0, 1]."""
        return (max(0.0, self.probability - k * self.std_error),
                min(1.0, self.probability + k * self.std_error))

    def to_dict(self):
        return {
            "p": self.probability,
            "se": self.std_error,
            "n": self.n,
            "y": self.y,
            "s_star": self.s_used,
            "mean_weight": self.mean_weight,
            "replicates": self.replicates,
            "seed": self.seed,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def weighted_mean(values, log_weight):
    """Mean and standard error of ``W * values`` with ``W = exp(log_weight)``."""
    v = np.exp(log_weight) * values
    m = len(v)
    return float(np.mean(v)), float(np.std(v, ddof=1) / math.sqrt(m)) if m > 1 else math.nan


def estimate_tail_probability(law, n, y=0.0, replicates=100_000, seed=0, x0=None,
                              threshold=None, cumulants=None, s=None,
                              resolution=DEFAULT_RESOLUTION, observable="log_vec_norm",
                              tail="upper", threads=1):
    """Tilted estimate of ``P(obs >= n lambda + sigma sqrt(n) y)``.

    With ``tail="lower"`` the event is ``obs <= n lambda - sigma sqrt(n) y``
    (or ``obs <= threshold``).

    The tilt parameter solves ``Lambda'(s*) = threshold / n`` unless ``s`` is
    given. ``threshold`` overrides the one built from ``y``; pass ``-inf``
    for the total mass.

    Parameters
    ----------
    cumulants : CumulantSet, optional
        Computed from the default pressure curve when omitted.
    """
    if y < 0:
        raise ValueError("y must be >= 0")
    if cumulants is None:
        cumulants = cumulants_from_pressure(pressure_curve(law, resolution=resolution))
    lam, sig2 = cumulants.lambda_lyap, cumulants.sigma2
    if tail not in ("upper", "lower"):
        raise ValueError("tail must be 'upper' or 'lower'")
    if threshold is None:
        shift = math.sqrt(max(sig2, 0.0) * n) * y
        threshold = n * lam + (shift if tail == "upper" else -shift)
    if s is None:
        s = 0.0 if not math.isfinite(threshold) else solve_saddle(cumulants, threshold / n)
    triple = spectral_triple(law, s, resolution=resolution)
    b = run_tilted_batch(law, triple, n, replicates, x0=x0, seed=seed, threads=threads)
    obs = b.observable(observable)
    hit = (obs >= threshold if tail == "upper" else obs <= threshold).astype(float)
    p, se = weighted_mean(hit, b.log_weight)
    mw, mw_se = weighted_mean(np.ones(len(hit)), b.log_weight)
    return TailEstimate(
        probability=p, std_error=se, n=n, y=float(y), threshold=float(threshold),
        s_used=float(s), mean_weight=mw, mean_weight_se=mw_se,
        replicates=replicates, seed=seed, events=int(hit.sum()), tail=tail,
    )


def exact_tail_by_enumeration(law, n, threshold, x0=None, observable="log_vec_norm"):
    """``P(obs >= threshold)`` by summing over all ``k^n`` atom sequences."""
    x0 = center(law.dim) if x0 is None else as_point(x0)
    total = 0.0
    for word in itertools.product(range(len(law.weights)), repeat=n):
        steps = iter(law.atoms[list(word)])
        replay = CallbackLaw(law.dim, lambda _rng, it=steps: next(it))
        t = run_trajectory(replay, x0, x0, n, rng=None)
        if getattr(t, observable) >= threshold:
            total += float(np.prod(law.weights[list(word)]))
    return total
