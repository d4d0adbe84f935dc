"""
Batch solution of the penalised least-squares problem

    min_Z  ||C Z - Y||^2 + lam * Z^T Q Z

through its normal equations ``A Z = C^T Y`` with ``A = C^T C + lam Q``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import linalg
from scipy import sparse
from scipy.linalg import lapack
from scipy.sparse.linalg import splu

from . import quadratic, zero
from .exceptions import DataError, NumericalError
from .signals import SampleSeries, TimeGrid

log = logging.getLogger(__name__)

MAX_CONDITION = 1e14
SYSTEM_RTOL = 1e-9
REFINEMENT_STEPS = 2
# above this many knots solve_batch switches to the sparse formulation
DENSE_MAX_KNOTS = 2500

SplineModel = Union[quadratic.QuadraticSplineModel, zero.ZeroOrderSplineModel]

__all__ = [
    "BatchSolution",
    "solve_batch",
    "design_matrices",
    "normal_matrix",
    "solve_normal",
    "solve_sparse",
    "model_class",
    "min_knots",
]

_MODULES = {0: zero, 1: quadratic}


def _module(order: int):
    try:
        return _MODULES[order]
    except KeyError:
        raise DataError(f"spline order must be 0 or 1, got {order!r}") from None


def min_knots(order: int) -> int:
    return _module(order).MIN_KNOTS


def model_class(order: int):
    return {0: zero.ZeroOrderSplineModel, 1: quadratic.QuadraticSplineModel}[order]


def design_matrices(grid: TimeGrid, order: int):
    """``(C_K, Q_K)`` for the requested spline order."""
    mod = _module(order)
    return mod.assemble_c(grid), mod.assemble_q(grid)


def normal_matrix(grid: TimeGrid, order: int, lam: float):
    C, Q = design_matrices(grid, order)
    return C.T @ C + lam * Q, C, Q


def _factor(A: np.ndarray, lam: float):
    """Return a solve callable and a reciprocal condition estimate for ``A``."""
    K = A.shape[0]
    anorm = np.abs(A).sum(axis=0).max()
    try:
        cf = linalg.cho_factor(A, lower=False, check_finite=False)
        rcond, info = lapack.dpocon(cf[0], anorm)
        return (lambda b: linalg.cho_solve(cf, b, check_finite=False)), rcond
    except linalg.LinAlgError:
        log.debug("Cholesky failed for K=%d, lambda=%g; falling back to LU", K, lam)
    lu, piv, info = lapack.dgetrf(A)
    if info > 0:
        raise NumericalError(f"normal matrix is singular (lambda={lam:g}, K={K})")
    rcond, _ = lapack.dgecon(lu, anorm, norm="1")
    return (lambda b: linalg.lu_solve((lu, piv), b, check_finite=False)), rcond


def _check_condition(rcond: float, lam: float, K: int):
    if not rcond > 1.0 / MAX_CONDITION:
        cond = np.inf if rcond == 0 else 1.0 / rcond
        raise NumericalError(
            f"normal matrix is singular or too ill-conditioned (condition estimate {cond:.3g} > "
            f"{MAX_CONDITION:.0e}) for lambda={lam:g}, K={K}; increase lambda")


def solve_normal(C: np.ndarray, Q: np.ndarray, Y: np.ndarray, lam: float, with_inverse: bool = False):
    """Minimise ``||C Z - Y||^2 + lam Z^T Q Z``.

    ``A = C^T C + lam Q`` is factored once; forming ``C^T C`` costs accuracy, so
    the solution is refined against the residual ``C^T (Y - C Z) - lam Q Z``
    computed from ``C`` and ``Q`` themselves. Returns ``Z`` or ``(Z, A^{-1})``.
    """
    A = C.T @ C + lam * Q
    K = A.shape[0]
    solve, rcond = _factor(A, lam)
    _check_condition(rcond, lam, K)
    rhs = C.T @ Y
    Z = solve(rhs)
    for _ in range(REFINEMENT_STEPS):
        dz = solve(C.T @ (Y - C @ Z) - lam * (Q @ Z))
        Z = Z + dz
        if np.linalg.norm(dz) <= 1e-15 * np.linalg.norm(Z):
            break
    scale = max(np.linalg.norm(rhs), np.finfo(float).tiny)
    res = np.linalg.norm(A @ Z - rhs)
    if not res <= SYSTEM_RTOL * scale:
        raise NumericalError(
            f"normal equations solved only to relative residual {res / scale:.2e} (lambda={lam:g}, K={K})")
    if not with_inverse:
        return Z
    inv = solve(np.eye(K))
    return Z, 0.5 * (inv + inv.T)


@dataclass(frozen=True, eq=False)
class BatchSolution:
    """Fitted model together with the two terms of the objective at the optimum."""

    model: SplineModel
    residual_norm: float
    penalty_value: float

    @property
    def params(self) -> np.ndarray:
        return self.model.params

    @property
    def objective(self) -> float:
        return self.residual_norm**2 + self.model.lam * self.penalty_value


def _interval_rows(grid: TimeGrid, order: int):
    """Sparse integral rows ``G`` and penalty ``Qp`` over the non-constant parameters."""
    h = grid.intervals
    n = h.size
    if order == 0:
        return sparse.diags(h).tocsc(), sparse.diags(h).tocsc()
    _, _, g, q = quadratic._grid_blocks(h)
    i = np.arange(n)
    rows, cols, vals = [], [], []
    for k in range(3):
        c = i + k - 1
        ok = (c >= 0) & (c < n)
        rows.append(i[ok]), cols.append(c[ok]), vals.append(g[ok, k])
    G = sparse.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    rows, cols, vals = [], [], []
    for a in range(3):
        for b in range(3):
            ra, cb = i + a - 1, i + b - 1
            ok = (ra >= 0) & (ra < n) & (cb >= 0) & (cb < n)
            rows.append(ra[ok]), cols.append(cb[ok]), vals.append(q[ok, a, b])
    Qp = sparse.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    return G, Qp


def solve_sparse(series: SampleSeries, order: int, lam: float) -> np.ndarray:
    """Same minimiser as :func:`solve_normal`, in O(K) memory.

    The predicted samples ``s`` are kept as unknowns tied together by
    ``s_{k+1} - s_k = G_k p``; the resulting saddle-point system is banded
    and factored with SuperLU. Returns ``Z = [s_1, p]``.
    """
    G, Qp = _interval_rows(series.grid, order)
    K = series.grid.size
    n = K - 1
    E = sparse.diags([-np.ones(n), np.ones(n)], [0, 1], shape=(n, K))
    kkt = sparse.bmat([
        [sparse.identity(K), None, E.T],
        [None, lam * Qp, -G.T],
        [E, -G, None],
    ], format="csc")
    rhs = np.zeros(K + 2 * n)
    rhs[:K] = series.values
    try:
        sol = splu(kkt).solve(rhs)
    except RuntimeError as exc:
        raise NumericalError(f"sparse system is singular (lambda={lam:g}, K={K}); increase lambda") from exc
    res = np.linalg.norm(kkt @ sol - rhs)
    scale = max(np.linalg.norm(rhs), np.finfo(float).tiny)
    if not (np.all(np.isfinite(sol)) and res <= SYSTEM_RTOL * scale):
        raise NumericalError(
            f"sparse system solved only to relative residual {res / scale:.2e} (lambda={lam:g}, K={K})")
    return np.concatenate([sol[:1], sol[K:K + n]])


def solve_batch(series: SampleSeries, order: int, lam: float, method: str = "auto") -> BatchSolution:
    """Fit a spline of the given order (0 or 1) to all samples of ``series``.

    Parameters
    ----------
    series : SampleSeries
        Samples; needs at least 2 knots for order 0 and 4 for order 1.
    order : {0, 1}
        0 for piecewise-constant, 1 for quadratic derivative splines.
    lam : float
        Penalty weight (>= 0) in the rescaled form used throughout the package.
    method : {"auto", "dense", "sparse"}
        Dense normal equations, or the banded formulation for long series.
        ``"auto"`` picks dense up to ``DENSE_MAX_KNOTS`` knots.

    Raises
    ------
    NumericalError
        If the normal matrix is singular or its condition estimate exceeds 1e14.
    """
    mod = _module(order)
    if not (np.isfinite(lam) and lam >= 0):
        raise DataError(f"lambda must be finite and >= 0, got {lam!r}")
    if series.grid.size < mod.MIN_KNOTS:
        raise DataError(f"order {order} needs at least {mod.MIN_KNOTS} samples, got {series.grid.size}")
    if method == "auto":
        method = "dense" if series.grid.size <= DENSE_MAX_KNOTS else "sparse"
    Y = series.values
    if method == "dense":
        C, Q = design_matrices(series.grid, order)
        Z = solve_normal(C, Q, Y, lam)
        model = model_class(order).from_params(series.grid, Z, lam)
        return BatchSolution(model, float(np.linalg.norm(C @ Z - Y)), float(Z @ Q @ Z))
    if method != "sparse":
        raise DataError(f"unknown batch method {method!r}")
    Z = solve_sparse(series, order, lam)
    G, Qp = _interval_rows(series.grid, order)
    pred = Z[0] + np.concatenate([[0.0], np.cumsum(G @ Z[1:])])
    model = model_class(order).from_params(series.grid, Z, lam)
    return BatchSolution(model, float(np.linalg.norm(pred - Y)), float(Z[1:] @ (Qp @ Z[1:])))
