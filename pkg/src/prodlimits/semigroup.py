"""Positive matrices acting on the positive part of the unit sphere.

Points of the projective space are unit vectors with non-negative
coordinates, stored as 1-d float arrays. Matrices are square arrays with
non-negative entries. Helpers here validate those representations; the
remaining functions are pure.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

UNIT_TOL = 1e-12
RENORM_TOL = 1e-6


class DegenerateActionError(ArithmeticError):
    """A matrix sends a point of the positive sphere to the zero vector."""


class NonConvergenceError(ArithmeticError):
    """Power iteration did not reach the requested bracket width.

    Attributes
    ----------
    lower, upper : float
        Last Collatz-Wielandt bracket of the spectral radius.
    """

    def __init__(self, msg, lower, upper):
        super().__init__(msg)
        self.lower = lower
        self.upper = upper


def as_matrix(g):
    """Validate ``g`` as a d x d non-negative matrix (d >= 2) and return a float copy."""
    g = np.array(g, dtype=float)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {g.shape}")
    if g.shape[0] < 2:
        raise ValueError("dimension must be at least 2")
    if not np.all(np.isfinite(g)):
        raise ValueError("matrix entries must be finite")
    if np.any(g < 0):
        raise ValueError("matrix entries must be non-negative")
    return g


def as_point(x):
    """Validate ``x`` as a point of the positive unit sphere.

    Coordinates must be non-negative. A vector whose norm is within 1e-6 of
    one is renormalized; anything further away is rejected. Use
    :func:`normalize` to project an arbitrary non-negative vector.
    """
    x = np.array(x, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("a point needs at least two coordinates")
    if np.any(x < 0):
        raise ValueError("point coordinates must be non-negative")
    nrm = np.linalg.norm(x)
    if abs(nrm - 1.0) > RENORM_TOL:
        raise ValueError(f"point is not on the unit sphere (|x| = {nrm})")
    if abs(nrm - 1.0) > UNIT_TOL:
        x = x / nrm
    return x


def normalize(v):
    """Project a non-negative non-zero vector onto the positive unit sphere."""
    v = np.asarray(v, dtype=float)
    nrm = np.linalg.norm(v)
    if nrm == 0:
        raise DegenerateActionError("cannot normalize the zero vector")
    return v / nrm


def basis(d, i):
    """Canonical basis vector e_i (0-based) of R^d."""
    e = np.zeros(d)
    e[i] = 1.0
    return e


def center(d):
    """The point (1, ..., 1)/sqrt(d)."""
    return np.full(d, 1.0 / np.sqrt(d))


def is_allowable(g):
    """Every row and every column has a strictly positive entry."""
    g = np.asarray(g)
    pos = g > 0
    return bool(pos.any(axis=0).all() and pos.any(axis=1).all())


def _min_ratio(x, y):
    # sup{a > 0 : a*y_i <= x_i for all i}; indices with y_i = 0 impose nothing
    mask = y > 0
    if not mask.any():
        return np.inf
    return float(np.min(x[mask] / y[mask]))


def hilbert_distance(x, y):
    """Hilbert cross-ratio distance between two points of the positive sphere.

    Returns ``(1 - m(x,y) m(y,x)) / (1 + m(x,y) m(y,x))``, a number in [0, 1].
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    p = _min_ratio(x, y) * _min_ratio(y, x)
    if not np.isfinite(p):
        raise ValueError("hilbert_distance needs non-zero points")
    # p <= 1 for unit vectors; clip round-off
    p = min(p, 1.0)
    return (1.0 - p) / (1.0 + p)


def project_act(g, x):
    """Projective action of ``g`` on ``x``.

    Returns
    -------
    gx : ndarray
        ``g x / |g x|``.
    log_gain : float
        ``log |g x|``.
    """
    v = np.asarray(g, dtype=float) @ np.asarray(x, dtype=float)
    nrm = np.linalg.norm(v)
    if nrm == 0:
        raise DegenerateActionError("g x = 0: non-allowable matrix applied to a boundary point")
    return v / nrm, float(np.log(nrm))


@dataclass(frozen=True)
class MatrixFunctionals:
    op_norm: float
    iota: float
    big_n: float

    @property
    def degenerate(self):
        return self.iota == 0.0


def _arc_extrema_2d(g):
    # |g x|^2 on x = (cos t, sin t), t in [0, pi/2], equals A + B cos 2t + C sin 2t
    q = g.T @ g
    a = 0.5 * (q[0, 0] + q[1, 1])
    b = 0.5 * (q[0, 0] - q[1, 1])
    c = q[0, 1]
    cands = [a + b, a - b]  # t = 0 and t = pi/2
    u = np.arctan2(c, b)  # stationary point of B cos u + C sin u
    for uu in (u, u + np.pi, u - np.pi):
        if 0.0 <= uu <= np.pi:
            cands.append(a + b * np.cos(uu) + c * np.sin(uu))
    return np.sqrt(max(max(cands), 0.0)), np.sqrt(max(min(cands), 0.0))


def matrix_functionals(g):
    """Operator norm, smallest stretch and ``N(g)`` over the positive sphere.

    For d = 2 the quadratic ``|g x|^2`` is optimized in closed form on the
    quarter circle. For d > 2 the supremum equals the largest singular value
    (its singular vector can be taken non-negative) and the infimum is
    attained at a basis vector, because ``x^T g^T g x >= sum_i (g^T g)_ii x_i^2``
    when ``g^T g`` has non-negative entries.
    """
    g = np.asarray(g, dtype=float)
    if g.shape[0] == 2:
        op, io = _arc_extrema_2d(g)
    else:
        op = float(np.linalg.norm(g, 2))
        io = float(np.min(np.linalg.norm(g, axis=0)))
    big_n = max(op, 1.0 / io) if io > 0 else np.inf
    return MatrixFunctionals(float(op), float(io), float(big_n))


def collatz_wielandt_bounds(g, x):
    """Collatz-Wielandt bracket ``(min_i (gx)_i/x_i, max_i (gx)_i/x_i)``.

    Always brackets the spectral radius of ``g``. ``x`` must be strictly
    positive.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("Collatz-Wielandt bounds need a strictly positive vector")
    r = (np.asarray(g, dtype=float) @ x) / x
    return float(r.min()), float(r.max())


def spectral_radius_pf(g, tol=1e-12, max_iter=100_000, x0=None):
    """Perron root and Perron vector of a non-negative matrix by power iteration.

    Iterates ``x <- g x / |g x|`` until the Collatz-Wielandt bracket has
    relative width at most ``tol``. Convergence is guaranteed for primitive
    matrices (some power strictly positive).

    Returns
    -------
    rho : float
    v : ndarray
        Unit non-negative vector with ``|g v - rho v| <= tol * rho``.

    Raises
    ------
    NonConvergenceError
        With the last bracket, if ``max_iter`` iterations do not suffice.
    """
    g = np.asarray(g, dtype=float)
    d = g.shape[0]
    x = center(d) if x0 is None else np.asarray(x0, dtype=float).copy()
    lo, hi = 0.0, np.inf
    for _ in range(max_iter):
        y = g @ x
        pos = x > 0
        if np.all(pos):
            ratios = y / x
            lo, hi = ratios.min(), ratios.max()
            if hi - lo <= tol * hi:
                rho = 0.5 * (lo + hi)
                return float(rho), x
        nrm = np.linalg.norm(y)
        if nrm == 0:
            raise NonConvergenceError("iterate collapsed to zero", 0.0, 0.0)
        x = y / nrm
    raise NonConvergenceError(
        f"power iteration did not converge in {max_iter} steps", float(lo), float(hi)
    )


@dataclass(frozen=True)
class MatrixConditions:
    allowable: bool
    strictly_positive: bool
    column_constant: Optional[float]


def column_constant(g):
    """max over columns of (largest entry / smallest entry); None if g has a zero."""
    g = np.asarray(g, dtype=float)
    if np.any(g <= 0):
        return None
    with np.errstate(over="ignore"):
        return float(np.max(g.max(axis=0) / g.min(axis=0)))


def check_conditions_matrix(g):
    """Allowability, strict positivity and the column-comparability constant."""
    g = np.asarray(g, dtype=float)
    return MatrixConditions(
        allowable=is_allowable(g),
        strictly_positive=bool(np.all(g > 0)),
        column_constant=column_constant(g),
    )


def epsilon_c_convert(direction, value, d):
    """Convert between the column constant C and the interior margin eps.

    ``direction="C->eps"`` gives ``eps = 1/(C d)``: matrices whose columns
    have constant at most C map the positive sphere into
    ``{x : x_i >= eps for all i}``.

    ``direction="eps->C"`` gives ``C = sqrt((1/eps^2 - 1)/(d - 1))``: a
    matrix mapping every basis vector into that set has column constant at
    most C.

    Both are one-sided sufficient bounds, so composing them does not return
    the input.
    """
    if d < 2:
        raise ValueError("d must be at least 2")
    if direction == "C->eps":
        if value < 1:
            raise ValueError("C must be >= 1")
        return 1.0 / (value * d)
    if direction == "eps->C":
        if not 0 < value < np.sqrt(2) / 2:
            raise ValueError("eps must lie in (0, sqrt(2)/2)")
        return float(np.sqrt((1.0 / value**2 - 1.0) / (d - 1)))
    raise ValueError(f"unknown direction {direction!r}")


def tau_over_set(gs, x):
    """``min |g x| / ||g||`` over a finite family of matrices.

    Over a finite subset of the semigroup this is an upper estimate of
    ``inf |g x| / ||g||`` over the whole semigroup.
    """
    gs = list(gs)
    if not gs:
        raise ValueError("empty matrix family")
    x = np.asarray(x, dtype=float)
    return min(np.linalg.norm(g @ x) / matrix_functionals(g).op_norm for g in gs)


def interior_margin(x):
    """Smallest coordinate of a point: x lies in the eps-interior iff this is >= eps."""
    return float(np.min(x))
