"""Discretized transfer operator and the quantities derived from its top eigenvalue.

For a finite-support law the operator

    (P_s phi)(x) = sum_i w_i |g_i x|^s phi(g_i . x)

is discretized on a grid of the positive sphere: rows are grid points, and
``phi(g_i . x)`` is replaced by linear interpolation between grid values.
Interpolation weights are non-negative and sum to one, so ``P_0`` is an
exact stochastic matrix and ``kappa(0) = 1`` up to round-off.

From ``kappa(s)`` over a range of ``s`` we get the pressure
``Lambda(s) = log kappa(s)``, its derivatives at zero (the cumulants), the
Cramer series and the Legendre transform.
"""

import csv
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .law import MatrixLaw
from .semigroup import DegenerateActionError, NonConvergenceError

DEFAULT_RESOLUTION = 512
DEFAULT_S_MAX = 0.5
DEFAULT_S_POINTS = 21
FIT_DEGREE = 6
# gamma_2 below this is treated as a degenerate (zero-variance) law
VARIANCE_FLOOR = 1e-9


class SpectralRangeError(ValueError):
    """A requested point lies outside the range covered by a pressure curve.

    Attributes
    ----------
    lower, upper : float
        The admissible range.
    """

    def __init__(self, msg, lower, upper):
        super().__init__(msg)
        self.lower = lower
        self.upper = upper


class DegenerateVarianceError(ArithmeticError):
    """gamma_2 = 0: the law has no Gaussian fluctuations."""


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True, eq=False)
class ProjGrid:
    """Grid on the positive part of the unit sphere.

    For ``d = 2`` the points are ``(cos t, sin t)`` at ``resolution + 1``
    equally spaced angles in [0, pi/2]. For ``d > 2`` they are the points
    ``k / resolution`` of the simplex (``k`` integer with sum ``resolution``)
    pushed radially onto the sphere.

    Attributes
    ----------
    dim : int
    resolution : int
        Number of angle intervals (d = 2) or simplex subdivisions (d > 2).
    points : ndarray, shape (m, d)
    quad_weights : ndarray, shape (m,)
        Positive quadrature weights summing to one.
    """

    dim: int
    resolution: int
    points: np.ndarray
    quad_weights: np.ndarray
    _lookup: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def size(self):
        return len(self.points)

    @property
    def step(self):
        """Angle spacing (d = 2 only)."""
        return 0.5 * math.pi / self.resolution

    def stencil(self, y):
        """Interpolation stencil of the directions ``y`` (rows, any positive scale).

        Returns
        -------
        idx : ndarray of int, shape (k, d)
        wts : ndarray, shape (k, d)
            Non-negative weights summing to one per row (unused slots have
            weight 0 and index 0).
        """
        y = np.atleast_2d(np.asarray(y, dtype=float))
        if self.dim == 2:
            theta = np.arctan2(y[:, 1], y[:, 0])
            t = theta / self.step
            lo = np.clip(np.floor(t).astype(np.int64), 0, self.resolution - 1)
            frac = np.clip(t - lo, 0.0, 1.0)
            return np.stack([lo, lo + 1], axis=1), np.stack([1.0 - frac, frac], axis=1)
        return _simplex_stencil(y, self.resolution, self._lookup)

    def interpolate(self, values, y):
        """Interpolated grid function at directions ``y`` (one or many)."""
        values = np.asarray(values, dtype=float)
        single = np.ndim(y) == 1
        idx, wts = self.stencil(y)
        out = np.sum(values[idx] * wts, axis=1)
        return float(out[0]) if single else out

    def integrate(self, values):
        return float(np.dot(self.quad_weights, values))


def _compositions(total, parts):
    # all non-negative integer vectors of length ``parts`` summing to ``total``
    for cuts in itertools.combinations(range(total + parts - 1), parts - 1):
        prev = -1
        out = []
        for c in cuts:
            out.append(c - prev - 1)
            prev = c
        out.append(total + parts - 2 - prev)
        yield out


def _simplex_stencil(y, res, lookup):
    # Freudenthal (Kuhn) interpolation in cumulative coordinates
    # c_k = res * (p_1 + ... + p_k), k < d, where p = y / sum(y).
    p = y / y.sum(axis=1, keepdims=True)
    c = res * np.cumsum(p, axis=1)[:, :-1]
    base = np.clip(np.floor(c).astype(np.int64), 0, res - 1)
    frac = np.clip(c - base, 0.0, 1.0)
    k, dm1 = c.shape
    # descending fractional parts; ties broken toward the larger coordinate index
    order = np.lexsort((-np.broadcast_to(np.arange(dm1), frac.shape), -frac), axis=-1)
    fs = np.take_along_axis(frac, order, axis=1)
    wts = np.empty((k, dm1 + 1))
    wts[:, 0] = 1.0 - fs[:, 0]
    wts[:, 1:-1] = fs[:, :-1] - fs[:, 1:]
    wts[:, -1] = fs[:, -1]
    idx = np.zeros((k, dm1 + 1), dtype=np.int64)
    vert = base.copy()
    rows = np.arange(k)
    for j in range(dm1 + 1):
        if j > 0:
            vert[rows, order[:, j - 1]] += 1
        ok = np.all(vert[:, 1:] >= vert[:, :-1], axis=1) & (vert[:, 0] >= 0) & (vert[:, -1] <= res)
        flat = np.ravel_multi_index(tuple(np.clip(vert, 0, res).T), (res + 1,) * dm1)
        found = lookup[flat]
        bad = (~ok | (found < 0)) & (wts[:, j] > 1e-14)
        if np.any(bad):
            raise ValueError("interpolation vertex outside the simplex lattice")
        idx[:, j] = np.where(found >= 0, found, 0)
        wts[:, j] = np.where(found >= 0, wts[:, j], 0.0)
    wts /= wts.sum(axis=1, keepdims=True)
    return idx, wts


def build_grid(d, resolution=DEFAULT_RESOLUTION):
    """Grid on the positive sphere (see :class:`ProjGrid`).

    Parameters
    ----------
    d : int
        Dimension, at least 2.
    resolution : int
        At least 2.
    """
    if d < 2:
        raise ValueError("dimension must be at least 2")
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    if d == 2:
        theta = np.linspace(0.0, 0.5 * math.pi, resolution + 1)
        pts = np.column_stack([np.cos(theta), np.sin(theta)])
        w = np.ones(resolution + 1)
        w[[0, -1]] = 0.5
        return ProjGrid(2, resolution, pts, w / w.sum())

    comps = np.array(list(_compositions(resolution, d)), dtype=np.int64)
    cum = np.cumsum(comps, axis=1)[:, :-1]
    lookup = np.full((resolution + 1) ** (d - 1), -1, dtype=np.int64)
    lookup[np.ravel_multi_index(tuple(cum.T), (resolution + 1,) * (d - 1))] = np.arange(len(comps))
    simplex = comps / resolution
    norms = np.linalg.norm(simplex, axis=1)
    pts = simplex / norms[:, None]
    # lumped weights: each Kuhn simplex gives 1/d of its mass to every vertex,
    # times the Jacobian |p|^-d of the radial projection
    counts = np.zeros(len(comps))
    for b in itertools.product(range(resolution), repeat=d - 1):
        for perm in itertools.permutations(range(d - 1)):
            v = np.array(b)
            verts = [v.copy()]
            for ax in perm:
                v[ax] += 1
                verts.append(v.copy())
            vs = np.array(verts)
            if np.all(np.diff(vs, axis=1) >= 0) and vs.max() <= resolution:
                ids = lookup[np.ravel_multi_index(tuple(vs.T), (resolution + 1,) * (d - 1))]
                counts[ids] += 1.0
    w = counts * norms ** (-d)
    lookup.setflags(write=False)
    return ProjGrid(d, resolution, pts, w / w.sum(), lookup)


# ---------------------------------------------------------------------------
# operator and eigen-triple


def assemble_transfer(law, s, grid):
    """Sparse matrix of the discretized ``P_s`` on ``grid``.

    Row ``x`` holds ``w_i |g_i x|^s`` spread over the interpolation stencil of
    ``g_i . x``. Raises :class:`DegenerateActionError` if some atom kills a
    grid point.
    """
    if not isinstance(law, MatrixLaw):
        raise TypeError("the spectral pipeline needs a finite-support law")
    if law.dim != grid.dim:
        raise ValueError("law and grid dimensions differ")
    m = grid.size
    rows, cols, vals = [], [], []
    ar = np.arange(m)
    for g, w in zip(law.atoms, law.weights):
        y = grid.points @ g.T
        ny = np.linalg.norm(y, axis=1)
        if np.any(ny == 0):
            raise DegenerateActionError("an atom maps a grid point to zero")
        idx, wts = grid.stencil(y / ny[:, None])
        scale = w * ny**s
        for j in range(idx.shape[1]):
            rows.append(ar)
            cols.append(idx[:, j])
            vals.append(scale * wts[:, j])
    op = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(m, m)
    ).tocsr()
    op.sum_duplicates()
    op.eliminate_zeros()
    return op


@dataclass(frozen=True, eq=False)
class SpectralTriple:
    """Top eigen-triple of a discretized transfer operator.

    Attributes
    ----------
    s : float
    kappa : float
        Dominant eigenvalue.
    r : ndarray
        Right eigenvector, strictly positive, normalized by ``nu @ r = 1``.
    nu : ndarray
        Left eigenvector, a probability vector on grid points.
    residual : float
        ``max |P r - kappa r| / kappa``.
    iterations : int
    grid : ProjGrid or None
    """

    s: float
    kappa: float
    r: np.ndarray
    nu: np.ndarray
    residual: float
    iterations: int = 0
    grid: Optional[ProjGrid] = field(default=None, repr=False)

    @property
    def pi(self):
        """Stationary law of the tilted chain: ``nu * r`` (already a probability vector)."""
        p = self.nu * self.r
        return p / p.sum()

    def r_at(self, x):
        """``r`` interpolated at direction(s) ``x``."""
        if self.grid is None:
            raise ValueError("triple has no grid attached")
        return self.grid.interpolate(self.r, x)


def _power_right(op, tol, max_iter):
    m = op.shape[0]
    v = np.ones(m)
    lo = hi = math.nan
    for it in range(1, max_iter + 1):
        w = op @ v
        if np.all(v > 0):
            ratio = w / v
            lo, hi = ratio.min(), ratio.max()
            if hi - lo <= tol * hi:
                return 0.5 * (lo + hi), v, it
        top = w.max()
        if top <= 0:
            raise NonConvergenceError("operator annihilated the iterate", 0.0, 0.0)
        v = w / top
    raise NonConvergenceError(
        f"right power iteration did not converge in {max_iter} steps", float(lo), float(hi)
    )


def _power_left(op, tol, max_iter):
    opt = op.T.tocsr()
    m = op.shape[0]
    nu = np.full(m, 1.0 / m)
    for it in range(1, max_iter + 1):
        w = opt @ nu
        k = w.sum()
        if k <= 0:
            raise NonConvergenceError("adjoint iterate collapsed to zero", 0.0, 0.0)
        w /= k
        if np.abs(w - nu).sum() <= tol:
            return k, w, it
        nu = w
    raise NonConvergenceError(
        f"left power iteration did not converge in {max_iter} steps", float(k), float(k)
    )


def leading_triple(op, s, tol=1e-12, max_iter=200_000, grid=None):
    """Dominant eigenvalue and eigenvectors of a non-negative operator.

    Power iteration on ``op`` (stopped by the Collatz-Wielandt bracket) and
    on its transpose. ``kappa`` is the Rayleigh ratio ``nu(P r)/nu(r)``.
    Normalized so that ``nu`` sums to one and ``nu @ r = 1``.

    Raises
    ------
    NonConvergenceError
        Carries the last bracket.
    """
    op = sparse.csr_matrix(op)
    if op.nnz and op.data.min() < 0:
        raise ValueError("operator entries must be non-negative")
    _, r, it_r = _power_right(op, tol, max_iter)
    _, nu, it_l = _power_left(op, tol, max_iter)
    pr = op @ r
    kappa = float(nu @ pr) / float(nu @ r)
    r = r / float(nu @ r)
    pr = op @ r
    residual = float(np.max(np.abs(pr - kappa * r)) / kappa)
    return SpectralTriple(float(s), kappa, r, nu, residual, it_r + it_l, grid)


def spectral_triple(law, s, resolution=DEFAULT_RESOLUTION, tol=1e-12, grid=None):
    """Assemble ``P_s`` for ``law`` and return its :class:`SpectralTriple`."""
    grid = grid or build_grid(law.dim, resolution)
    return leading_triple(assemble_transfer(law, s, grid), s, tol=tol, grid=grid)


# ---------------------------------------------------------------------------
# pressure, cumulants, Cramer series, Legendre transform


def chebyshev_s_grid(s_max=DEFAULT_S_MAX, count=DEFAULT_S_POINTS):
    """``count`` Chebyshev nodes on [-s_max, s_max], increasing; contains 0 for odd count."""
    k = np.arange(count)
    s = s_max * np.cos(np.pi * (k + 0.5) / count)[::-1]
    if count % 2:
        s[count // 2] = 0.0
    return s


@dataclass(frozen=True, eq=False)
class PressureCurve:
    """``Lambda(s) = log kappa(s)`` on an increasing grid of ``s``.

    ``refinement_gap`` is ``max |Lambda_res - Lambda_res/2|`` over the grid
    (None when the two-resolution check was skipped).
    """

    s_grid: np.ndarray
    lambda_vals: np.ndarray
    kappa: np.ndarray
    residual: np.ndarray
    resolution: int
    refinement_gap: Optional[float] = None

    def second_differences(self):
        s, v = self.s_grid, self.lambda_vals
        # divided second differences on a non-uniform grid
        d1 = np.diff(v) / np.diff(s)
        return 2.0 * np.diff(d1) / (s[2:] - s[:-2])

    def is_convex(self, tol=1e-8):
        return bool(np.all(self.second_differences() >= -tol))

    def csv_rows(self):
        yield ["s", "lambda", "kappa", "residual"]
        for row in zip(self.s_grid, self.lambda_vals, self.kappa, self.residual):
            yield [repr(float(v)) for v in row]

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh, lineterminator="\n").writerows(self.csv_rows())


def pressure_curve(law, s_grid=None, resolution=DEFAULT_RESOLUTION, tol=1e-12,
                   refine_check=True, threads=1):
    """Pressure ``Lambda(s)`` at each ``s`` in ``s_grid``.

    Parameters
    ----------
    s_grid : array_like, optional
        Increasing values of ``s``; default 21 Chebyshev nodes on [-0.5, 0.5].
    refine_check : bool
        Also solve at half resolution and report the largest difference.
    threads : int
        Points of ``s_grid`` are solved concurrently.
    """
    s_grid = chebyshev_s_grid() if s_grid is None else np.asarray(s_grid, dtype=float)
    if np.any(np.diff(s_grid) <= 0):
        raise ValueError("s_grid must be strictly increasing")

    def solve(res):
        grid = build_grid(law.dim, res)

        def one(s):
            return leading_triple(assemble_transfer(law, s, grid), s, tol=tol)

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                return list(pool.map(one, s_grid))
        return [one(s) for s in s_grid]

    triples = solve(resolution)
    kappa = np.array([t.kappa for t in triples])
    lam = np.log(kappa)
    gap = None
    if refine_check:
        coarse = np.log([t.kappa for t in solve(max(2, resolution // 2))])
        gap = float(np.max(np.abs(coarse - lam)))
    return PressureCurve(
        s_grid=s_grid,
        lambda_vals=lam,
        kappa=kappa,
        residual=np.array([t.residual for t in triples]),
        resolution=resolution,
        refinement_gap=gap,
    )


@dataclass(frozen=True, eq=False)
class CumulantSet:
    """Derivatives ``gamma_k = Lambda^(k)(0)``, k = 1..5, from a polynomial fit.

    ``coeffs`` are the fitted power-series coefficients of ``Lambda`` (lowest
    degree first) and ``residual`` the RMS fit residual.
    """

    gamma: tuple
    s_max: float
    coeffs: np.ndarray
    residual: float

    @property
    def lambda_lyap(self):
        return self.gamma[0]

    @property
    def sigma2(self):
        return self.gamma[1]

    def pressure(self, s):
        return np.polynomial.polynomial.polyval(s, self.coeffs)

    def derivative(self, s, order=1):
        c = np.polynomial.polynomial.polyder(self.coeffs, order)
        return np.polynomial.polynomial.polyval(s, c)

    def sigma_t(self, t):
        """``sqrt(Lambda''(t))``, the tilted standard deviation (labelled convention)."""
        v = float(self.derivative(t, 2))
        return math.sqrt(max(v, 0.0))

    def to_dict(self):
        return {
            "gamma": [float(g) for g in self.gamma],
            "lambda": float(self.lambda_lyap),
            "sigma2": float(self.sigma2),
            "s_max": self.s_max,
            "fit_residual": self.residual,
        }


def cumulants_from_pressure(curve, s_max=None, degree=FIT_DEGREE):
    """Least-squares polynomial fit of ``Lambda`` on ``|s| <= s_max``.

    Raises
    ------
    ValueError
        Fewer than 13 points in the fit window, or a window too narrow for a
        well-conditioned fit.
    """
    s = np.asarray(curve.s_grid)
    v = np.asarray(curve.lambda_vals)
    if s_max is None:
        s_max = float(min(-s[0], s[-1]))
    sel = np.abs(s) <= s_max * (1 + 1e-12)
    if sel.sum() < 13:
        raise ValueError("cumulant fit needs at least 13 s-points within |s| <= s_max")
    if s_max < 1e-2:
        raise ValueError(f"s_max = {s_max} is too small for a stable degree-{degree} fit")
    u = s[sel] / s_max
    vand = np.vander(u, degree + 1, increasing=True)
    if np.linalg.cond(vand) > 1e8:
        raise ValueError("ill-conditioned cumulant fit")
    cu, *_ = np.linalg.lstsq(vand, v[sel], rcond=None)
    resid = float(np.sqrt(np.mean((vand @ cu - v[sel]) ** 2)))
    coeffs = cu / s_max ** np.arange(degree + 1)
    gamma = tuple(float(math.factorial(k) * coeffs[k]) for k in range(1, 6))
    return CumulantSet(gamma=gamma, s_max=float(s_max), coeffs=coeffs, residual=resid)


@dataclass(frozen=True)
class CramerSeries:
    """First three terms ``c0 + c1 t + c2 t^2`` of the Cramer series."""

    c0: float
    c1: float
    c2: float
    radius_hint: float

    def __call__(self, t):
        if abs(t) > self.radius_hint:
            raise SpectralRangeError(
                f"|t| = {abs(t)} exceeds the series radius hint {self.radius_hint}",
                -self.radius_hint, self.radius_hint,
            )
        return self.c0 + self.c1 * t + self.c2 * t * t

    def to_dict(self):
        return {"c0": self.c0, "c1": self.c1, "c2": self.c2, "radius_hint": self.radius_hint}


def cramer_series(cumulants):
    g1, g2, g3, g4, g5 = cumulants.gamma
    if g2 <= VARIANCE_FLOOR:
        raise DegenerateVarianceError(f"gamma_2 = {g2!r}: Cramer series undefined")
    return CramerSeries(
        c0=g3 / (6.0 * g2**1.5),
        c1=(g4 * g2 - 3.0 * g3**2) / (24.0 * g2**3),
        c2=(g5 * g2**2 - 10.0 * g4 * g3 * g2 + 15.0 * g3**3) / (120.0 * g2**4.5),
        radius_hint=0.5 * cumulants.s_max,
    )


def cramer_zeta(cumulants, t):
    """Cramer series ``zeta(t)``, truncated after the ``t^2`` term."""
    return cramer_series(cumulants)(t)


def legendre_transform(curve, q):
    """``Lambda*(q) = sup_s (s q - Lambda(s))`` on the range of the curve.

    A cubic spline through the curve is differentiated and ``Lambda'(s) = q``
    is solved by root bracketing.

    Raises
    ------
    SpectralRangeError
        If ``q`` lies outside ``[Lambda'(s_min), Lambda'(s_max)]``.
    """
    s = np.asarray(curve.s_grid)
    spline = CubicSpline(s, curve.lambda_vals)
    dspl = spline.derivative()
    lo, hi = float(dspl(s[0])), float(dspl(s[-1]))
    tol = 1e-9 * max(1.0, abs(q))
    if not lo - tol <= q <= hi + tol:
        raise SpectralRangeError(f"q = {q} outside the derivative range [{lo}, {hi}]", lo, hi)
    if hi - lo <= 2 * tol:
        # flat derivative: Lambda is affine, sup attained anywhere; use s = 0 if available
        s_star = 0.0 if s[0] <= 0.0 <= s[-1] else float(s[0])
    elif q <= lo:
        s_star = float(s[0])
    elif q >= hi:
        s_star = float(s[-1])
    else:
        s_star = brentq(lambda x: float(dspl(x)) - q, s[0], s[-1], xtol=1e-14)
    return float(s_star * q - spline(s_star))


def spectral_summary(curve, cumulants):
    """JSON-ready summary of a pressure curve fit."""
    out = {"resolution": curve.resolution, "refinement_gap": curve.refinement_gap,
           "cumulants": cumulants.to_dict()}
    try:
        out["cramer"] = cramer_series(cumulants).to_dict()
    except DegenerateVarianceError as err:
        out["cramer"] = {"error": str(err)}
    return out


def write_summary(path, summary):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
