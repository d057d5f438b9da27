"""Statistical checks of the limit theorems on simulated products.

Every check standardizes an observable by ``n lambda`` and ``sigma sqrt(n)``.
For finite-support laws both come from the spectral pipeline; otherwise they
are plug-in estimates from a long simulation. Reports record which.
"""

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import ndtr

from .law import CallbackLaw, MatrixLaw
from .semigroup import center, hilbert_distance, spectral_radius_pf
from .simulate import Batch, SimConfig, run_batch
from .spectral import (
    DEFAULT_RESOLUTION,
    VARIANCE_FLOOR,
    DegenerateVarianceError,
    cramer_series,
    cumulants_from_pressure,
    pressure_curve,
)
from .streams import stream_key
from .tilted import estimate_tail_probability

EVENT_FLOOR = 100
# mean and standard deviation of the Kolmogorov distribution
_KS_MEAN = 0.8687
_KS_SD = 0.2603


# ---------------------------------------------------------------------------
# shared plumbing


@dataclass(frozen=True)
class Moments:
    """Centering and scale used to standardize observables."""

    lam: float
    sigma2: float
    source: str
    cumulants: object = field(default=None, repr=False)

    @property
    def sigma(self):
        return math.sqrt(max(self.sigma2, 0.0))


def law_moments(law, cumulants=None, resolution=DEFAULT_RESOLUTION, seed=0,
                plugin_n=1024, plugin_replicates=20_000):
    """``lambda`` and ``sigma^2`` of ``law`` with their provenance.

    Single-atom laws get ``lambda = log rho(g)`` and ``sigma^2 = 0`` exactly.
    Other finite-support laws use the pressure fit; callback laws use
    ``mean/n`` and ``var/n`` of ``log |G_n x|`` at ``n = plugin_n``.
    """
    if cumulants is not None:
        return Moments(cumulants.lambda_lyap, cumulants.sigma2, "spectral", cumulants)
    if isinstance(law, MatrixLaw):
        if len(law.weights) == 1:
            rho, _ = spectral_radius_pf(law.atoms[0])
            return Moments(math.log(rho), 0.0, "exact")
        cu = cumulants_from_pressure(pressure_curve(law, resolution=resolution, refine_check=False))
        return Moments(cu.lambda_lyap, cu.sigma2, "spectral", cu)
    b = run_batch(SimConfig(law, n=plugin_n, replicates=plugin_replicates, seed=seed))
    v = b.log_vec_norm[b.valid("log_vec_norm")]
    return Moments(float(v.mean() / plugin_n), float(v.var(ddof=1) / plugin_n), "plugin")


def _rung_seed(seed, n):
    # distinct, reproducible seed per ladder rung
    return stream_key(seed & (2**64 - 1), n)


def _write_csv(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


class _Report:
    # shared export: subclasses define HEADER and rows()

    def csv_rows(self):
        yield list(self.HEADER)
        for row in self.rows():
            yield [_fmt(v) for v in row]

    def to_csv(self, path):
        _write_csv(path, self.csv_rows())


def manifest(law, seed, replicates, resolution=None, tolerances=None, **extra):
    """JSON-ready description of an experiment."""
    out = {
        "law_hash": law.fingerprint(),
        "seed": int(seed),
        "replicates": replicates,
        "resolution": resolution,
        "tolerances": tolerances or {},
    }
    out.update(extra)
    return out


def write_manifest(path, data):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Kolmogorov distance to the normal law


def sup_gap_to_normal(samples, center, scale):
    """``sup_y |F_hat(y) - Phi(y)|`` for the standardized samples.

    ``F_hat`` is the empirical CDF of ``(samples - center) / scale``. The
    supremum is attained at a jump, so it is evaluated exactly from both
    one-sided limits at every distinct value.
    """
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("no samples")
    if not scale > 0:
        raise ValueError("scale must be positive")
    z = np.sort((x - center) / scale)
    m = z.size
    vals, first = np.unique(z, return_index=True)
    upper = np.append(first[1:], m) / m  # F(v)
    lower = first / m  # F(v-)
    phi = ndtr(vals)
    return float(max(np.max(np.abs(upper - phi)), np.max(np.abs(lower - phi))))


@dataclass
class BerryEsseenReport(_Report):
    """Sup-gaps per observable and ``n`` with a power-law fit ``c n^-beta``.

    ``se`` is the standard deviation of the Kolmogorov statistic under an
    exact fit (``0.26 / sqrt(m)``), a rough Monte Carlo error bar.
    """

    ns: list
    gaps: dict
    se: list
    fits: dict
    moments: Moments
    replicates: int
    seed: int

    HEADER = ("observable", "n", "gap", "se", "c", "beta")

    def ratio(self, observable, n_small, n_large):
        g = dict(zip(self.ns, self.gaps[observable]))
        return g[n_small] / g[n_large]

    def rows(self):
        for obs, gaps in self.gaps.items():
            c, beta = self.fits[obs]
            for n, g, se in zip(self.ns, gaps, self.se):
                yield obs, n, g, se, c, beta


def _power_fit(ns, gaps):
    ln, lg = np.log(ns), np.log(np.maximum(gaps, 1e-300))
    slope, icpt = np.polyfit(ln, lg, 1)
    return float(math.exp(icpt)), float(-slope)


def berry_esseen_rate_fit(law, ns=(64, 256, 1024), replicates=100_000, seed=0,
                          observables=Batch.OBSERVABLES, cumulants=None, x0=None, f=None,
                          threads=1, resolution=DEFAULT_RESOLUTION):
    """Kolmogorov distance to the normal law along a ladder of ``n``.

    Raises
    ------
    DegenerateVarianceError
        When ``sigma^2`` is zero.
    """
    mom = law_moments(law, cumulants, resolution=resolution, seed=seed)
    if mom.sigma2 <= VARIANCE_FLOOR:
        raise DegenerateVarianceError(f"sigma^2 = {mom.sigma2!r}: no Gaussian limit")
    gaps = {o: [] for o in observables}
    ses = []
    for n in ns:
        b = run_batch(SimConfig(law, n=n, replicates=replicates, x0=x0, f=f,
                                seed=_rung_seed(seed, n)), threads=threads)
        for o in observables:
            ok = b.valid(o)
            gaps[o].append(sup_gap_to_normal(b.observable(o)[ok], n * mom.lam,
                                             mom.sigma * math.sqrt(n)))
        ses.append(_KS_SD / math.sqrt(replicates))
    fits = {o: _power_fit(ns, g) for o, g in gaps.items()}
    return BerryEsseenReport(list(ns), gaps, ses, fits, mom, replicates, seed)


# ---------------------------------------------------------------------------
# moderate deviations


@dataclass
class MDRReport(_Report):
    """Measured against predicted normal-tail correction factors."""

    n: int
    rows_: list
    moments: Moments
    method: str
    replicates: int
    seed: int

    HEADER = ("observable", "tail", "y", "measured", "predicted", "rel_error",
              "probability", "se", "events", "flagged")

    def rows(self):
        for r in self.rows_:
            yield tuple(r[k] for k in self.HEADER)

    def find(self, observable, tail, y):
        for r in self.rows_:
            if r["observable"] == observable and r["tail"] == tail and r["y"] == y:
                return r
        raise KeyError((observable, tail, y))


def predicted_factor(series, y, n, tail="upper"):
    """``exp(+-(y^3/sqrt n) zeta(+-y/sqrt n))`` for the upper / lower tail."""
    t = y / math.sqrt(n)
    if tail == "upper":
        return math.exp(y**3 / math.sqrt(n) * series(t))
    return math.exp(-(y**3) / math.sqrt(n) * series(-t))


def moderate_deviation_ratio(law, n, ys, cumulants=None, method="plain", replicates=100_000,
                             seed=0, observables=("log_vec_norm",), tails=("upper", "lower"),
                             x0=None, threads=1, resolution=DEFAULT_RESOLUTION):
    """Tail ratios ``P(obs - n lambda >= sigma sqrt(n) y) / (1 - Phi(y))``.

    ``method="plain"`` uses one plain batch for every ``y``; rows with fewer
    than 100 events are flagged. ``method="tilted"`` runs one importance
    sampling batch per ``y`` and tail.

    Raises
    ------
    ValueError
        If some ``y`` exceeds ``n^(1/6)``.
    """
    mom = law_moments(law, cumulants, resolution=resolution, seed=seed)
    if mom.cumulants is None:
        raise ValueError("moderate deviation predictions need spectral cumulants")
    series = cramer_series(mom.cumulants)
    cap = n ** (1.0 / 6.0)
    if any(y > cap + 1e-12 or y < 0 for y in ys):
        raise ValueError(f"y must lie in [0, n^(1/6)] = [0, {cap:.4f}]")
    scale = mom.sigma * math.sqrt(n)
    rows = []
    plain = None
    if method == "plain":
        plain = run_batch(SimConfig(law, n=n, replicates=replicates, x0=x0, seed=seed),
                          threads=threads)
    elif method != "tilted":
        raise ValueError("method must be 'plain' or 'tilted'")
    for obs in observables:
        for tail in tails:
            for y in ys:
                normal = float(ndtr(-y))
                if method == "plain":
                    v = plain.observable(obs)
                    ok = plain.valid(obs)
                    dev = (v[ok] - n * mom.lam) / scale
                    hits = dev >= y if tail == "upper" else dev <= -y
                    events = int(hits.sum())
                    p = events / ok.sum()
                    se = math.sqrt(p * (1 - p) / ok.sum())
                else:
                    thr = n * mom.lam + (scale * y if tail == "upper" else -scale * y)
                    est = estimate_tail_probability(
                        law, n, threshold=thr, replicates=replicates, seed=seed, x0=x0,
                        cumulants=mom.cumulants, observable=obs, tail=tail,
                        resolution=resolution, threads=threads,
                    )
                    p, se, events = est.probability, est.std_error, est.events
                measured = p / normal
                predicted = predicted_factor(series, y, n, tail)
                rows.append({
                    "observable": obs, "tail": tail, "y": y,
                    "measured": measured, "predicted": predicted,
                    "rel_error": measured / predicted - 1.0,
                    "probability": p, "se": se, "events": events,
                    "flagged": events < EVENT_FLOOR,
                })
    return MDRReport(n, rows, mom, method, replicates, seed)


@dataclass
class MDPReport(_Report):
    """Rates ``(n / b_n^2) log P((obs - n lambda)/b_n >= y0)`` along a ladder."""

    exponent: float
    y0: float
    target: float
    rows_: list
    moments: Moments
    replicates: int
    seed: int

    HEADER = ("n", "b_n", "probability", "se", "rate", "target", "flagged")

    def rows(self):
        for r in self.rows_:
            yield tuple(r[k] for k in self.HEADER)

    @property
    def rates(self):
        return [r["rate"] for r in self.rows_]


def mdp_target(y0, sigma2):
    """Limit ``-y0^2 / (2 sigma^2)`` of the rate sequence."""
    return -(y0**2) / (2.0 * sigma2)


def mdp_rate_check(law, exponent=0.7, y0=1.0, ns=(256, 1024, 4096), replicates=100_000,
                   seed=0, cumulants=None, sigma2=None, x0=None, observable="log_vec_norm",
                   threads=1, resolution=DEFAULT_RESOLUTION):
    """Moderate deviation rates with ``b_n = n^exponent`` and ``B = [y0, inf)``.

    Probabilities come from the tilted sampler. ``y0 = -inf`` gives the whole
    line and rate 0. ``sigma2`` overrides the variance used for the target.
    """
    if not 0.5 < exponent < 1.0:
        raise ValueError("exponent must lie in (1/2, 1)")
    mom = law_moments(law, cumulants, resolution=resolution, seed=seed)
    s2 = mom.sigma2 if sigma2 is None else sigma2
    target = 0.0 if y0 == -math.inf else mdp_target(y0, s2)
    rows = []
    for n in ns:
        bn = n**exponent
        thr = n * mom.lam + y0 * bn
        est = estimate_tail_probability(
            law, n, threshold=thr, replicates=replicates, seed=_rung_seed(seed, n), x0=x0,
            cumulants=mom.cumulants, observable=observable, resolution=resolution,
            threads=threads,
        )
        p = est.probability
        rate = n / bn**2 * math.log(p) if p > 0 else -math.inf
        rows.append({"n": n, "b_n": bn, "probability": p, "se": est.std_error,
                     "rate": rate, "target": target, "flagged": not p > 0})
    return MDPReport(exponent, y0, target, rows, mom, replicates, seed)


# ---------------------------------------------------------------------------
# target functions and weighted expectations


def _holder_norm(fn, d, gamma, points=64, seed=0):
    if d == 2:
        th = np.linspace(0.0, 0.5 * math.pi, points)
        pts = np.column_stack([np.cos(th), np.sin(th)])
    else:
        rng = np.random.default_rng(seed)
        pts = rng.exponential(size=(points, d))
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    vals = np.array([fn(p) for p in pts], dtype=float)
    semi = 0.0
    for i in range(points):
        for j in range(i + 1, points):
            dist = hilbert_distance(pts[i], pts[j])
            if dist > 0:
                semi = max(semi, abs(vals[i] - vals[j]) / dist**gamma)
    return float(np.max(np.abs(vals)) + semi)


@dataclass(frozen=True, eq=False)
class TargetFunction:
    """Function on the positive sphere with an estimate of its Holder norm.

    ``holder_norm_estimate`` is ``sup |phi| + [phi]_gamma`` over pairs of a
    fixed point set, with ``[phi]_gamma`` taken in the Hilbert metric.
    """

    evaluator: Callable
    dim: int = 2
    gamma: float = 0.5
    holder_norm_estimate: float = math.nan

    @classmethod
    def build(cls, evaluator, dim=2, gamma=0.5):
        return cls(evaluator, dim, gamma, _holder_norm(evaluator, dim, gamma))

    @classmethod
    def constant(cls, value=1.0, dim=2):
        value = float(value)
        return cls(lambda x: value, dim, 0.5, abs(value))

    @classmethod
    def coordinate(cls, i, dim=2, gamma=0.5):
        return cls.build(lambda x: float(x[i]), dim, gamma)

    def __call__(self, x):
        return self.evaluator(x)

    def values(self, xs):
        return np.array([self.evaluator(x) for x in xs], dtype=float)


def weighted_indicator_expectation(batch, phi, event):
    """Mean and standard error of ``phi(X_n) 1{event}`` over a batch.

    Parameters
    ----------
    batch : Batch
        Importance weights are applied when the batch carries them.
    phi : TargetFunction or callable
    event : callable or array of bool
        ``event(batch)`` must return one boolean per replicate.
    """
    mask = np.asarray(event(batch) if callable(event) else event, dtype=bool)
    vals = np.where(mask, phi.values(batch.x_final) if isinstance(phi, TargetFunction)
                    else np.array([phi(x) for x in batch.x_final], dtype=float), 0.0)
    if batch.log_weight is not None:
        vals = vals * np.exp(batch.log_weight)
    m = len(vals)
    se = float(np.std(vals, ddof=1) / math.sqrt(m)) if m > 1 else math.nan
    return float(np.mean(vals)), se


# ---------------------------------------------------------------------------
# asymptotic variance


@dataclass
class VarianceTriple(_Report):
    """``(1/n) E[(obs - n lambda)^2]`` for operator norm, entry and spectral radius."""

    n: int
    values: dict
    ses: dict
    moments: Moments
    replicates: int
    seed: int

    HEADER = ("observable", "n", "value", "se")
    NAMES = ("log_op_norm", "log_entry", "log_spec_rad")

    def rows(self):
        for k in self.NAMES:
            yield k, self.n, self.values[k], self.ses[k]

    def pairwise_z(self):
        """``|a - b| / sqrt(se_a^2 + se_b^2)`` for each pair (0 when both SEs vanish)."""
        out = {}
        for i, a in enumerate(self.NAMES):
            for b in self.NAMES[i + 1:]:
                se = math.hypot(self.ses[a], self.ses[b])
                diff = abs(self.values[a] - self.values[b])
                out[(a, b)] = 0.0 if diff == 0 else (diff / se if se > 0 else math.inf)
        return out


def variance_triple(law, n, replicates=100_000, seed=0, cumulants=None, x0=None, f=None,
                    threads=1, resolution=DEFAULT_RESOLUTION):
    """Normalized second moments of the three matrix observables.

    Deviations below a round-off floor ``64 n eps max(1, |lambda|)`` are
    set to zero, so a deterministic law gives exactly 0.
    """
    mom = law_moments(law, cumulants, resolution=resolution, seed=seed)
    b = run_batch(SimConfig(law, n=n, replicates=replicates, x0=x0, f=f, seed=seed),
                  threads=threads)
    floor = 64 * n * np.finfo(float).eps * max(1.0, abs(mom.lam))
    vals, ses = {}, {}
    for k in VarianceTriple.NAMES:
        ok = b.valid(k)
        dev = b.observable(k)[ok] - n * mom.lam
        dev[np.abs(dev) <= floor] = 0.0
        sq = dev**2 / n
        vals[k] = float(np.mean(sq))
        ses[k] = float(np.std(sq, ddof=1) / math.sqrt(len(sq))) if len(sq) > 1 else math.nan
    return VarianceTriple(n, vals, ses, mom, replicates, seed)


# ---------------------------------------------------------------------------
# regularity of the stationary law


@dataclass
class RegularityReport(_Report):
    """Empirical tail ``nu_hat(<f, x> <= t)`` on a grid of ``t`` and its log-log slope.

    ``alpha = inf`` is the sentinel for a tail that vanishes on the whole
    grid; ``gap`` is then the smallest observed ``<f, x>``.
    """

    t_grid: np.ndarray
    tail: np.ndarray
    counts: np.ndarray
    alpha: float
    gap: float
    samples: int

    HEADER = ("t", "tail", "count", "used_in_fit")

    def rows(self):
        for t, p, c in zip(self.t_grid, self.tail, self.counts):
            yield t, p, c, bool(c >= EVENT_FLOOR)


def regularity_exponent(samples, f, t_grid=None, min_count=EVENT_FLOOR):
    """Holder exponent estimate of the stationary law in direction ``f``.

    Parameters
    ----------
    samples : ndarray, shape (m, d)
        Points from :func:`prodlimits.simulate.stationary_sample`.
    f : array_like
        Direction on the positive sphere.
    t_grid : array_like, optional
        Increasing values in (0, 1); default 26 log-spaced points in [1e-6, 0.1].
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim != 2 or len(x) < min_count:
        raise ValueError(f"need at least {min_count} samples")
    t = np.logspace(-6, -1, 26) if t_grid is None else np.asarray(t_grid, dtype=float)
    if np.any(t <= 0) or np.any(t >= 1) or np.any(np.diff(t) <= 0):
        raise ValueError("t_grid must be increasing inside (0, 1)")
    proj = np.sort(x @ np.asarray(f, dtype=float))
    counts = np.searchsorted(proj, t, side="right")
    tail = counts / len(proj)
    gap = float(proj[0])
    if counts[-1] == 0:
        return RegularityReport(t, tail, counts, math.inf, gap, len(proj))
    use = counts >= min_count
    if use.sum() < 2:
        alpha = math.nan
    else:
        alpha = float(np.polyfit(np.log(t[use]), np.log(tail[use]), 1)[0])
    return RegularityReport(t, tail, counts, alpha, gap, len(proj))
