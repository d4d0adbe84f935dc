"""
Quadratic derivative splines parameterised by one coefficient per interval.

On ``[t_i, t_{i+1}]`` the derivative estimate is

    z_i(t) = ((t - t_i)^2 z_{i+1} + (t - t_i)(t - t_{i+1}) p_i + (t - t_{i+1})^2 z_i) / h_i^2

The knot values ``z`` are not free: C^1 continuity fixes the interior ones and
zero second derivative at both ends fixes ``z_1`` and ``z_K``, so the model is
carried by ``Z = [x(t_1), p_1, ..., p_{K-1}]``. Every knot value depends on two
neighbouring ``p``'s and every interval touches at most the three parameters
``(p_{i-1}, p_i, p_{i+1})``; :func:`interval_blocks` returns those local rows
and all matrix assembly (batch and recursive) is built from them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DataError, DomainError
from .signals import TimeGrid

MIN_KNOTS = 4

__all__ = [
    "MIN_KNOTS",
    "QuadraticSplineModel",
    "knot_rules",
    "ptoz_matrix",
    "p_to_z",
    "interval_blocks",
    "assemble_c",
    "assemble_q",
    "eval_derivative",
]


def _check_size(grid: TimeGrid):
    if grid.size < MIN_KNOTS:
        raise DataError(f"quadratic splines need K >= {MIN_KNOTS} knots, got {grid.size}")


def _interior(a, b):
    """Coefficients of ``z_j`` on ``(p_{j-1}, p_j)`` given ``h_{j-1} = a``, ``h_j = b``."""
    s = 2.0 * (a + b)
    return -b / s, -a / s


def _left_boundary(a, b):
    """Coefficients of ``z_1`` on ``(p_1, p_2)`` given ``h_1 = a``, ``h_2 = b``."""
    s = a + b
    return -(0.5 * b + a) / s, 0.5 * a / s


def _right_boundary(a, b):
    """Coefficients of ``z_K`` on ``(p_{K-2}, p_{K-1})`` given ``h_{K-2} = a``, ``h_{K-1} = b``."""
    s = a + b
    return 0.5 * b / s, -(0.5 * a + b) / s


def knot_rules(h: np.ndarray):
    """Sparse form of the p -> z map.

    Returns
    -------
    cols : numpy.ndarray of int, shape (K, 2)
        Indices (0-based, into ``p``) of the two parameters each knot value uses.
    coefs : numpy.ndarray, shape (K, 2)
        The matching coefficients.
    """
    h = np.asarray(h, dtype=float)
    n = h.size
    if n + 1 < MIN_KNOTS:
        raise DataError(f"quadratic splines need K >= {MIN_KNOTS} knots, got {n + 1}")
    cols = np.empty((n + 1, 2), dtype=int)
    coefs = np.empty((n + 1, 2))
    j = np.arange(1, n)
    cols[1:n, 0] = j - 1
    cols[1:n, 1] = j
    coefs[1:n, 0], coefs[1:n, 1] = _interior(h[:-1], h[1:])
    cols[0] = (0, 1)
    coefs[0] = _left_boundary(h[0], h[1])
    cols[n] = (n - 2, n - 1)
    coefs[n] = _right_boundary(h[-2], h[-1])
    return cols, coefs


def ptoz_matrix(grid: TimeGrid) -> np.ndarray:
    """Dense ``K x (K-1)`` matrix mapping ``p`` to the knot derivatives ``z``."""
    _check_size(grid)
    cols, coefs = knot_rules(grid.intervals)
    P = np.zeros((grid.size, grid.size - 1))
    rows = np.arange(grid.size)
    P[rows, cols[:, 0]] = coefs[:, 0]
    P[rows, cols[:, 1]] = coefs[:, 1]
    return P


def p_to_z(p, grid: TimeGrid) -> np.ndarray:
    """Knot derivative values ``z_1..z_K`` implied by interval parameters ``p``."""
    _check_size(grid)
    p = np.asarray(p, dtype=float)
    if p.shape != (grid.size - 1,):
        raise DataError(f"expected {grid.size - 1} interval parameters, got {p.size}")
    cols, coefs = knot_rules(grid.intervals)
    return coefs[:, 0] * p[cols[:, 0]] + coefs[:, 1] * p[cols[:, 1]]


def interval_blocks(h_prev, h, h_next, left_boundary, right_boundary):
    """Local rows of interval ``i`` over the parameter window ``(p_{i-1}, p_i, p_{i+1})``.

    Arguments broadcast, so one call can process every interval of a grid.
    ``h_prev`` is ignored on the left-boundary interval and ``h_next`` on the
    right-boundary one; window slots outside ``p`` receive zero coefficients.

    Returns
    -------
    zl, zr : numpy.ndarray, shape (..., 3)
        Knot derivatives at the left and right end of the interval.
    g : numpy.ndarray, shape (..., 3)
        Integral of the piece over the interval.
    q : numpy.ndarray, shape (..., 3, 3)
        Quadratic form of the integral of the squared slope of the piece.
    """
    h_prev, h, h_next, left, right = np.broadcast_arrays(
        np.asarray(h_prev, float), np.asarray(h, float), np.asarray(h_next, float),
        np.asarray(left_boundary, bool), np.asarray(right_boundary, bool))
    if np.any(left & right):
        raise DataError("an interval cannot touch both boundaries (K >= 4 required)")
    shape = h.shape + (3,)
    zl = np.zeros(shape)
    zr = np.zeros(shape)

    safe_prev = np.where(left, 1.0, h_prev)
    c0, c1 = _interior(safe_prev, h)
    b0, b1 = _left_boundary(h, np.where(left, h_next, 1.0))
    zl[..., 0] = np.where(left, 0.0, c0)
    zl[..., 1] = np.where(left, b0, c1)
    zl[..., 2] = np.where(left, b1, 0.0)

    safe_next = np.where(right, 1.0, h_next)
    c0, c1 = _interior(h, safe_next)
    b0, b1 = _right_boundary(np.where(right, h_prev, 1.0), h)
    zr[..., 0] = np.where(right, b0, 0.0)
    zr[..., 1] = np.where(right, b1, c0)
    zr[..., 2] = np.where(right, 0.0, c1)

    e = np.zeros(shape)
    e[..., 1] = 1.0
    hh = h[..., None]
    g = hh / 3.0 * (zl + zr) - hh / 6.0 * e
    # z' is linear on the interval: alpha at the left end, beta at the right end
    alpha = -(e + 2.0 * zl) / hh
    beta = (2.0 * zr + e) / hh
    outer = lambda u, v: u[..., :, None] * v[..., None, :]
    ab = outer(alpha, beta)
    q = hh[..., None] / 3.0 * (outer(alpha, alpha) + 0.5 * (ab + np.swapaxes(ab, -1, -2)) + outer(beta, beta))
    return zl, zr, g, q


def _grid_blocks(h):
    n = h.size
    idx = np.arange(n)
    h_prev = np.concatenate([[np.nan], h[:-1]])
    h_next = np.concatenate([h[1:], [np.nan]])
    return interval_blocks(h_prev, h, h_next, idx == 0, idx == n - 1)


def _scatter_rows(blocks, n):
    """Place window rows (n, 3) into an (n, n) matrix indexed by parameter."""
    W = np.zeros((n, n + 2))
    i = np.arange(n)
    for k in range(3):
        W[i, i + k] = blocks[:, k]
    return W[:, 1:-1]


def assemble_c(grid: TimeGrid) -> np.ndarray:
    """Design matrix mapping ``Z = [x(t_1), p]`` to predicted samples at every knot."""
    _check_size(grid)
    h = grid.intervals
    n = h.size
    _, _, g, _ = _grid_blocks(h)
    C = np.zeros((n + 1, n + 1))
    C[:, 0] = 1.0
    np.cumsum(_scatter_rows(g, n), axis=0, out=C[1:, 1:])
    return C


def assemble_q(grid: TimeGrid) -> np.ndarray:
    """Penalty matrix with ``Z^T Q Z`` equal to the integral of ``z'(t)^2``."""
    _check_size(grid)
    h = grid.intervals
    n = h.size
    _, _, _, q = _grid_blocks(h)
    Qp = np.zeros((n + 2, n + 2))
    for i in range(n):
        Qp[i:i + 3, i:i + 3] += q[i]
    Q = np.zeros((n + 1, n + 1))
    Q[1:, 1:] = Qp[1:-1, 1:-1]
    return Q


@dataclass(frozen=True, eq=False)
class QuadraticSplineModel:
    """Quadratic-spline derivative estimate on ``grid``.

    Attributes
    ----------
    grid : TimeGrid
    x0 : float
        Estimate of the signal at the first knot.
    p : numpy.ndarray
        Interval parameters ``p_1..p_{K-1}``.
    lam : float
        Penalty weight the model was fitted with (informational).
    """

    grid: TimeGrid
    x0: float
    p: np.ndarray
    lam: float = 0.0
    z: np.ndarray = field(init=False, repr=False)

    order = 1

    def __post_init__(self):
        _check_size(self.grid)
        p = np.array(self.p, dtype=float)
        if p.shape != (self.grid.size - 1,):
            raise DataError(f"expected {self.grid.size - 1} interval parameters, got {p.size}")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "x0", float(self.x0))
        z = p_to_z(p, self.grid)
        z.setflags(write=False)
        object.__setattr__(self, "z", z)

    @classmethod
    def from_params(cls, grid: TimeGrid, Z, lam: float = 0.0) -> "QuadraticSplineModel":
        Z = np.asarray(Z, dtype=float)
        return cls(grid, Z[0], Z[1:], lam)

    @property
    def params(self) -> np.ndarray:
        return np.concatenate([[self.x0], self.p])

    @property
    def knot_derivatives(self) -> np.ndarray:
        return self.z

    def second_derivatives(self) -> np.ndarray:
        """Constant second derivative of each piece, ``2 (z_{i+1} + z_i + p_i) / h_i^2``."""
        h = self.grid.intervals
        return 2.0 * (self.z[1:] + self.z[:-1] + self.p) / h**2

    def derivative(self, t):
        return eval_derivative(self, t)

    __call__ = derivative


def _locate(knots: np.ndarray, t: np.ndarray) -> np.ndarray:
    if np.any(t < knots[0]) or np.any(t > knots[-1]):
        bad = t[(t < knots[0]) | (t > knots[-1])][0]
        raise DomainError(f"t = {bad!r} outside [{knots[0]!r}, {knots[-1]!r}]")
    # ties at interior knots go to the left piece
    return np.clip(np.searchsorted(knots, t, side="left") - 1, 0, knots.size - 2)


def eval_derivative(model: QuadraticSplineModel, t):
    """Evaluate the derivative spline at ``t`` (scalar or array) inside the knot span."""
    knots = model.grid.knots
    ta = np.asarray(t, dtype=float)
    tt = np.atleast_1d(ta)
    i = _locate(knots, tt)
    h = model.grid.intervals[i]
    a = tt - knots[i]
    b = tt - knots[i + 1]
    out = (a * a * model.z[i + 1] + a * b * model.p[i] + b * b * model.z[i]) / (h * h)
    out = np.where(a == 0.0, model.z[i], np.where(b == 0.0, model.z[i + 1], out))
    return float(out[0]) if ta.ndim == 0 else out
