"""
Endpoint estimates for every prefix of a stream in O(1) work per sample.

The penalised least-squares objective is a chain: with the predicted samples
``s_k`` as auxiliary variables, ``s_{k+1} = s_k + (integral over interval k)``
and each interval only involves ``(p_{k-1}, p_k, p_{k+1})`` (quadratic case) or
``z_k`` (zero-order case). Eliminating variables front to back keeps a small
quadratic "message" over the trailing variables. Only the last interval
depends on the right-end boundary rule, so it is added tentatively to solve for
the endpoint and the message is advanced with its interior form once the next
knot arrives. The results equal the batch solution's endpoint on each prefix.

This is the long-stream path of the benchmark harness; the O(K^2)
:class:`~splinediff.recursive.RecursiveState` additionally maintains the full
parameter vector.
"""

from __future__ import annotations

import numpy as np

from . import quadratic
from .exceptions import DataError, NumericalError, OrderingError, UnsupportedConfigurationError
from .signals import SampleSeries

__all__ = ["SequentialEndpointSolver", "endpoint_estimates"]


def _eliminate_first(J, eta):
    """Marginalise variable 1 out of the quadratic form ``v^T J v - 2 eta^T v``."""
    piv = J[1, 1]
    if not piv > 0:
        raise NumericalError("forward elimination met a non-positive pivot; is lambda > 0?")
    keep = [0] + list(range(2, J.shape[0]))
    col = J[keep, 1]
    Jr = J[np.ix_(keep, keep)] - np.outer(col, col) / piv
    er = eta[keep] - col * (eta[1] / piv)
    return Jr, er


class SequentialEndpointSolver:
    """Push samples one at a time; :meth:`push` returns the current endpoint estimate.

    Parameters
    ----------
    order : {0, 1}
    lam : float
        Penalty weight, must be > 0.
    """

    def __init__(self, order: int, lam: float):
        if order not in (0, 1):
            raise DataError(f"spline order must be 0 or 1, got {order!r}")
        if not (np.isfinite(lam) and lam > 0):
            raise UnsupportedConfigurationError(f"sequential elimination needs lambda > 0, got {lam!r}")
        self.order = order
        self.lam = float(lam)
        self._t: list[float] = []
        self._y: list[float] = []
        self._count = 0
        self._J = None
        self._eta = None

    @property
    def K(self) -> int:
        """Number of samples pushed so far."""
        return self._count

    @property
    def min_knots(self) -> int:
        return quadratic.MIN_KNOTS if self.order == 1 else 2

    def push(self, t: float, y: float):
        """Add a sample; returns the derivative estimate at ``t`` or ``None`` while warming up."""
        t, y = float(t), float(y)
        if not (np.isfinite(t) and np.isfinite(y)):
            raise DataError(f"sample ({t!r}, {y!r}) is not finite")
        if self._t and not t > self._t[-1]:
            raise OrderingError(f"new time {t!r} is not after last knot {self._t[-1]!r}")
        # only the last four samples are ever needed
        self._t = self._t[-3:] + [t]
        self._y = self._y[-3:] + [y]
        self._count += 1
        return self._push_zero() if self.order == 0 else self._push_quadratic()

    # zero-order: message over s_{j-1}
    def _push_zero(self):
        t, y = self._t, self._y
        if self._count == 1:
            self._J = np.array([[1.0]])
            self._eta = np.array([y[-1]])
            return None
        h = t[-1] - t[-2]
        a = np.array([1.0, h])
        J = np.zeros((2, 2))
        J[0, 0] = self._J[0, 0]
        J[1, 1] = self.lam * h
        J += np.outer(a, a)
        eta = np.array([self._eta[0], 0.0]) + a * y[-1]
        z = np.linalg.solve(J, eta)[1]
        # advance: (s_{j-1}, z) -> (s_j, z), then drop z
        T = np.array([[1.0, -h], [0.0, 1.0]])
        J, eta = T.T @ J @ T, T.T @ eta
        piv = J[1, 1]
        self._J = np.array([[J[0, 0] - J[0, 1] ** 2 / piv]])
        self._eta = np.array([eta[0] - J[0, 1] * eta[1] / piv])
        return float(z)

    # quadratic: message over (s_{j-1}, p_{j-2}, p_{j-1})
    def _push_quadratic(self):
        t, y = self._t, self._y
        j = self._count - 1  # index of the newest knot
        if j == 0:
            # (s_0, dummy, p_0); the dummy stands for the non-existent p_{-1}
            self._J = np.diag([1.0, 1.0, 0.0])
            self._eta = np.array([y[-1], 0.0, 0.0])
            return None
        if j == 1:
            return None
        h = np.diff(t)
        # interval j-2 is now interior on both ends: fold it into the message
        left = j - 2 == 0
        h_prev = h[-3] if not left else np.nan
        _, _, g, q = quadratic.interval_blocks(h_prev, h[-2], h[-1], left, False)
        J = np.zeros((4, 4))
        J[:3, :3] = self._J
        J[1:, 1:] += self.lam * q
        eta = np.concatenate([self._eta, [0.0]])
        T = np.eye(4)
        T[0, 1:] = -g
        J = T.T @ J @ T
        eta = T.T @ eta
        J[0, 0] += 1.0
        eta[0] += y[-2]
        self._J, self._eta = _eliminate_first(J, eta)
        if j + 1 < quadratic.MIN_KNOTS:
            return None
        # tentative last interval with the right-end boundary rule
        _, _, g, q = quadratic.interval_blocks(h[-2], h[-1], np.nan, False, True)
        Jt = self._J.copy()
        Jt[1:, 1:] += self.lam * q[:2, :2]
        a = np.array([1.0, g[0], g[1]])
        Jt += np.outer(a, a)
        et = self._eta + a * y[-1]
        try:
            v = np.linalg.solve(Jt, et)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"singular endpoint system at K={j + 1}") from exc
        c0, c1 = quadratic._right_boundary(h[-2], h[-1])
        return float(c0 * v[1] + c1 * v[2])


def endpoint_estimates(series: SampleSeries, order: int, lam: float) -> np.ndarray:
    """Endpoint derivative estimate of every prefix of ``series`` (NaN before the minimum size)."""
    solver = SequentialEndpointSolver(order, lam)
    out = np.full(len(series), np.nan)
    for k, (t, y) in enumerate(zip(series.times, series.values)):
        est = solver.push(t, y)
        if est is not None:
            out[k] = est
    return out
