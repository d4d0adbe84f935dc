"""Piecewise-constant derivative estimates (zero-order splines)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DataError, DomainError
from .signals import TimeGrid

MIN_KNOTS = 2

__all__ = ["MIN_KNOTS", "ZeroOrderSplineModel", "assemble_c", "assemble_q", "eval_derivative"]


def _check_size(grid: TimeGrid):
    if grid.size < MIN_KNOTS:
        raise DataError(f"zero-order splines need K >= {MIN_KNOTS} knots, got {grid.size}")


def assemble_c(grid: TimeGrid) -> np.ndarray:
    """Lower-triangular design matrix: row k is ``[1, h_1, ..., h_{k-1}, 0, ...]``."""
    _check_size(grid)
    K = grid.size
    C = np.zeros((K, K))
    C[:, 0] = 1.0
    C[1:, 1:] = np.tril(np.broadcast_to(grid.intervals, (K - 1, K - 1)))
    return C


def assemble_q(grid: TimeGrid) -> np.ndarray:
    """``diag(0, h_1, ..., h_{K-1})``."""
    _check_size(grid)
    return np.diag(np.concatenate([[0.0], grid.intervals]))


@dataclass(frozen=True, eq=False)
class ZeroOrderSplineModel:
    """Derivative equal to ``z_i`` on ``[t_i, t_{i+1})`` and ``z_{K-1}`` at ``t_K``."""

    grid: TimeGrid
    x0: float
    z: np.ndarray
    lam: float = 0.0

    order = 0

    def __post_init__(self):
        _check_size(self.grid)
        z = np.array(self.z, dtype=float)
        if z.shape != (self.grid.size - 1,):
            raise DataError(f"expected {self.grid.size - 1} interval values, got {z.size}")
        z.setflags(write=False)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "x0", float(self.x0))

    @classmethod
    def from_params(cls, grid: TimeGrid, Z, lam: float = 0.0) -> "ZeroOrderSplineModel":
        Z = np.asarray(Z, dtype=float)
        return cls(grid, Z[0], Z[1:], lam)

    @property
    def params(self) -> np.ndarray:
        return np.concatenate([[self.x0], self.z])

    @property
    def knot_derivatives(self) -> np.ndarray:
        """Estimate at each knot: the piece starting there, and ``z_{K-1}`` at the end."""
        return np.concatenate([self.z, self.z[-1:]])

    def derivative(self, t):
        return eval_derivative(self, t)

    __call__ = derivative


def eval_derivative(model: ZeroOrderSplineModel, t):
    knots = model.grid.knots
    ta = np.asarray(t, dtype=float)
    tt = np.atleast_1d(ta)
    if np.any(tt < knots[0]) or np.any(tt > knots[-1]):
        bad = tt[(tt < knots[0]) | (tt > knots[-1])][0]
        raise DomainError(f"t = {bad!r} outside [{knots[0]!r}, {knots[-1]!r}]")
    # right-open pieces, closed at t_K
    i = np.minimum(np.searchsorted(knots, tt, side="right") - 1, knots.size - 2)
    out = model.z[i]
    return float(out[0]) if ta.ndim == 0 else out
