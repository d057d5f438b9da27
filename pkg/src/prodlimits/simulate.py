"""Simulation of products G_n = g_n ... g_1 in log scale.

Entries of G_n grow like exp(n * lambda), so products are carried as
``M_k = G_k / ||G_k||`` together with ``L_k = log ||G_k||``. Every observable
is then ``log(<functional of M_n>) + L_n``.

Two routes compute the same numbers. :func:`run_trajectory` is a plain
Python loop over :mod:`prodlimits.semigroup` primitives, and :func:`run_batch`
drives the compiled kernels across replicates. Replicate ``i`` of a batch
uses stream ``split(seed, i)``, so both agree trajectory by trajectory.
"""

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .law import CallbackLaw, MatrixLaw, sample_index, sample_matrix
from .semigroup import (
    DegenerateActionError,
    NonConvergenceError,
    as_point,
    center,
    collatz_wielandt_bounds,
    matrix_functionals,
    project_act,
    spectral_radius_pf,
)
from .streams import CounterStream, split

CHUNK = 16_384
OVERFLOW_GUARD = 2**63

FLAG_DEGENERATE = _kernels.FLAG_DEGENERATE
FLAG_ENTRY_UNDERFLOW = _kernels.FLAG_ENTRY_UNDERFLOW
FLAG_RHO_BRACKET = _kernels.FLAG_RHO_BRACKET


@dataclass
class Trajectory:
    """One realization of the product and its four log observables."""

    n: int
    x0: np.ndarray
    f: np.ndarray
    log_vec_norm: float
    log_op_norm: float
    log_entry: float
    log_spec_rad: float
    x_final: np.ndarray
    per_step_log_gains: Optional[np.ndarray] = None
    rho_bracket_width: float = 0.0
    flags: int = 0


def _log_spec_rad(m):
    # spectral radius of the normalized product; reducible products fall back
    # to the Collatz-Wielandt midpoint with the bracket width reported
    try:
        rho, _ = spectral_radius_pf(m, tol=1e-10, max_iter=10_000)
        return math.log(rho), 0.0
    except NonConvergenceError as err:
        lo, hi = err.lower, err.upper
        mid = 0.5 * (lo + hi)
        return (math.log(mid) if mid > 0 else -math.inf), hi - lo


def _finish(law_dim, m, lognorm, x0, f, x, gains, n):
    mx = m @ x0
    nx = np.linalg.norm(mx)
    flags = 0
    if nx == 0:
        raise DegenerateActionError("G_n x0 = 0")
    fx = float(f @ mx)
    if fx > 0:
        log_entry = math.log(fx) + lognorm
    else:
        log_entry = -math.inf
        flags |= FLAG_ENTRY_UNDERFLOW
    lr, width = _log_spec_rad(m)
    if width > 0:
        flags |= FLAG_RHO_BRACKET
    return Trajectory(
        n=n,
        x0=x0,
        f=f,
        log_vec_norm=math.log(nx) + lognorm,
        log_op_norm=math.log(matrix_functionals(m).op_norm) + lognorm,
        log_entry=log_entry,
        log_spec_rad=lr + lognorm,
        x_final=x,
        per_step_log_gains=None if gains is None else np.array(gains),
        rho_bracket_width=width,
        flags=flags,
    )


def run_trajectory(law, x0, f, n, rng, keep_gains=False):
    """Simulate one product of length ``n``.

    Parameters
    ----------
    law : MatrixLaw or CallbackLaw
    x0, f : array_like
        Starting point and test direction on the positive sphere.
    n : int
    rng : object with ``random()``
        One uniform is consumed per step for finite-support laws.
    keep_gains : bool
        Keep the per-step increments ``log |g_k X_{k-1}|``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    x0 = as_point(x0)
    f = as_point(f)
    d = x0.size
    m = np.eye(d)
    lognorm = 0.0
    x = x0
    gains = [] if keep_gains else None
    for _ in range(n):
        g = sample_matrix(law, rng)
        m = g @ m
        nrm = matrix_functionals(m).op_norm
        m = m / nrm
        lognorm += math.log(nrm)
        x, gain = project_act(g, x)
        if keep_gains:
            gains.append(gain)
    return _finish(d, m, lognorm, x0, f, x, gains, n)


@dataclass
class SimConfig:
    law: object
    n: int
    replicates: int
    x0: Optional[np.ndarray] = None
    f: Optional[np.ndarray] = None
    seed: int = 0
    keep_gains: bool = False

    def __post_init__(self):
        if self.n < 1 or self.replicates < 1:
            raise ValueError("n and replicates must be positive")
        if self.n * self.replicates >= OVERFLOW_GUARD:
            raise ValueError("n * replicates exceeds the step counter range")
        d = self.law.dim
        self.x0 = center(d) if self.x0 is None else as_point(self.x0)
        self.f = center(d) if self.f is None else as_point(self.f)


@dataclass
class Batch:
    """Observables of a batch of replicates, one array entry per replicate."""

    n: int
    x0: np.ndarray
    f: np.ndarray
    log_vec_norm: np.ndarray
    log_op_norm: np.ndarray
    log_entry: np.ndarray
    log_spec_rad: np.ndarray
    x_final: np.ndarray
    flags: np.ndarray
    rho_bracket_width: np.ndarray
    gains: Optional[np.ndarray] = None
    log_weight: Optional[np.ndarray] = None
    seed: int = 0
    errors: dict = field(default_factory=dict)

    OBSERVABLES = ("log_vec_norm", "log_op_norm", "log_entry", "log_spec_rad")

    def __len__(self):
        return len(self.log_vec_norm)

    @property
    def weights(self):
        if self.log_weight is None:
            return np.ones(len(self))
        return np.exp(self.log_weight)

    def observable(self, name):
        if name not in self.OBSERVABLES:
            raise KeyError(f"unknown observable {name!r}; choose from {self.OBSERVABLES}")
        return getattr(self, name)

    def valid(self, name):
        """Mask of rows whose observable is finite and whose action did not degenerate."""
        return np.isfinite(self.observable(name)) & ((self.flags & FLAG_DEGENERATE) == 0)

    def trajectory(self, i):
        return Trajectory(
            n=self.n, x0=self.x0, f=self.f,
            log_vec_norm=float(self.log_vec_norm[i]),
            log_op_norm=float(self.log_op_norm[i]),
            log_entry=float(self.log_entry[i]),
            log_spec_rad=float(self.log_spec_rad[i]),
            x_final=self.x_final[i].copy(),
            per_step_log_gains=None if self.gains is None else self.gains[i].copy(),
            rho_bracket_width=float(self.rho_bracket_width[i]),
            flags=int(self.flags[i]),
        )

    def moments(self):
        """Mean and variance per observable over valid rows, with exclusion counts."""
        out = {}
        for name in self.OBSERVABLES:
            v = self.observable(name)
            ok = self.valid(name)
            out[name] = {
                "mean": float(np.mean(v[ok])) if ok.any() else math.nan,
                "var": float(np.var(v[ok], ddof=1)) if ok.sum() > 1 else math.nan,
                "excluded": int((~ok).sum()),
            }
        return out

    def csv_rows(self):
        d = self.x_final.shape[1]
        yield (["replicate", "n", *self.OBSERVABLES]
               + [f"x_final_{j}" for j in range(d)]
               + ([] if self.log_weight is None else ["log_weight"]))
        for i in range(len(self)):
            row = [str(i), str(self.n)]
            row += [repr(float(getattr(self, k)[i])) for k in self.OBSERVABLES]
            row += [repr(float(c)) for c in self.x_final[i]]
            if self.log_weight is not None:
                row.append(repr(float(self.log_weight[i])))
            yield row

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerows(self.csv_rows())


def _empty_batch(n, x0, f, r, d, keep_gains, seed, tilted=False):
    return Batch(
        n=n, x0=x0, f=f,
        log_vec_norm=np.empty(r), log_op_norm=np.empty(r),
        log_entry=np.empty(r), log_spec_rad=np.empty(r),
        x_final=np.empty((r, d)), flags=np.zeros(r, dtype=np.int64),
        rho_bracket_width=np.zeros(r),
        gains=np.empty((r, n)) if keep_gains else None,
        log_weight=np.empty(r) if tilted else None,
        seed=seed,
    )


def _blocks(replicates):
    return [(s, min(CHUNK, replicates - s)) for s in range(0, replicates, CHUNK)]


def _run_blocks(fn, blocks, threads):
    if threads <= 1 or len(blocks) == 1:
        for b in blocks:
            fn(*b)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(lambda b: fn(*b), blocks))


def run_batch(cfg, threads=1):
    """Simulate ``cfg.replicates`` independent products.

    Output is identical for every ``threads`` value: replicate ``i`` always
    uses stream ``(cfg.seed, i)``.
    """
    law = cfg.law
    d = law.dim
    b = _empty_batch(cfg.n, cfg.x0, cfg.f, cfg.replicates, d, cfg.keep_gains, cfg.seed)
    if isinstance(law, CallbackLaw):
        for i in range(cfg.replicates):
            try:
                t = run_trajectory(law, cfg.x0, cfg.f, cfg.n, split(cfg.seed, i), cfg.keep_gains)
            except (DegenerateActionError, ArithmeticError) as err:
                b.errors[i] = str(err)
                b.flags[i] |= FLAG_DEGENERATE
                for k in Batch.OBSERVABLES:
                    getattr(b, k)[i] = -math.inf
                b.x_final[i] = math.nan
                continue
            for k in Batch.OBSERVABLES:
                getattr(b, k)[i] = getattr(t, k)
            b.x_final[i] = t.x_final
            b.flags[i] = t.flags
            b.rho_bracket_width[i] = t.rho_bracket_width
            if cfg.keep_gains:
                b.gains[i] = t.per_step_log_gains
        return b

    atoms = np.ascontiguousarray(law.atoms)
    cum = law.cum_weights
    gains_dummy = np.empty((1, 1))

    kernel = _kernels.simulate_block_2d if d == 2 else _kernels.simulate_block

    def work(start, count):
        sl = slice(start, start + count)
        kernel(
            atoms, cum, cfg.x0, cfg.f, cfg.n, np.uint64(cfg.seed & (2**64 - 1)), start, count,
            cfg.keep_gains,
            b.log_vec_norm[sl], b.log_op_norm[sl], b.log_entry[sl], b.log_spec_rad[sl],
            b.rho_bracket_width[sl], b.x_final[sl], b.flags[sl],
            b.gains[sl] if cfg.keep_gains else gains_dummy,
        )

    _run_blocks(work, _blocks(cfg.replicates), threads)
    for i in np.flatnonzero(b.flags & FLAG_DEGENERATE):
        b.errors[int(i)] = "degenerate projective action"
    return b


def stationary_sample(law, burn_in, count, rng, thin=1, x0=None):
    """Points of the projective chain after a burn-in.

    The chain starts at a uniformly drawn interior point (unless ``x0`` is
    given), runs ``burn_in`` steps, then records ``count`` states taken every
    ``thin`` steps.

    Returns
    -------
    ndarray, shape (count, d)
    """
    if burn_in < 1:
        raise ValueError("burn_in must be >= 1")
    d = law.dim
    if x0 is None:
        # uniform direction in the open positive orthant
        z = np.array([-math.log(1.0 - rng.random()) for _ in range(d)]) + 1e-300
        x = z / np.linalg.norm(z)
    else:
        x = as_point(x0)
    for _ in range(burn_in):
        x, _ = project_act(sample_matrix(law, rng), x)
    out = np.empty((count, d))
    for i in range(count):
        for _ in range(thin):
            x, _ = project_act(sample_matrix(law, rng), x)
        out[i] = x
    return out


def stationary_sample_fast(law, burn_in, count, seed, x0=None):
    """Vectorized stationary sampling: ``count`` independent chains of length ``burn_in``.

    Only for finite-support laws. Chain ``i`` uses stream ``(seed, i)``.
    """
    if not isinstance(law, MatrixLaw):
        raise TypeError("stationary_sample_fast needs a finite-support law")
    cfg = SimConfig(law, n=burn_in, replicates=count, x0=x0, seed=seed)
    return run_batch(cfg).x_final
