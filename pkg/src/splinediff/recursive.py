"""
Online spline differentiation: fold each new sample into the previous solution.

The state keeps the inverse normal matrix ``A_K^{-1}`` and the current
parameters. A new knot only changes the last row of ``C`` and adds a new one,
and only touches a 3x3 corner of ``Q`` (quadratic case), so
``A_{K+1} = pad(A_K) + dA`` with a low-rank ``dA``. The inverse is grown with
the bordering (block-inversion) formula after the leading ``K x K`` block has
been updated by three rank-two Sherman-Morrison-Woodbury steps. For zero-order
splines a single rank-one update suffices. Each update costs O(K^2).

In the quadratic case the propagated inverse can lose a few digits when the
bordering Schur complement cancels (few knots, fine sampling). One step of
iterative refinement against ``C``, ``Y`` and the band of ``Q`` after every
update keeps the parameters at batch accuracy for three extra O(K^2) products.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np
from scipy.linalg import blas

from . import batch, quadratic
from .exceptions import DataError, NumericalError, OrderingError, UnsupportedConfigurationError
from .signals import SampleSeries, TimeGrid

log = logging.getLogger(__name__)

MIN_KNOTS = {0: 2, 1: 5}
INNER_MAX_CONDITION = 1e12
BREAKDOWN_RTOL = 1e-14
SNAPSHOT_FORMAT = "splinediff.recursive-state"

__all__ = [
    "RecursiveState",
    "init",
    "update",
    "update_quadratic",
    "update_zero",
    "endpoint_estimate",
    "refactorize",
    "quadratic_increment",
    "delta_a",
    "zero_order_row",
]


def _tail_blocks(h_prev2, h_prev, h_new):
    """Interval blocks for the old last interval (before and after the new knot) and the new one."""
    _, _, g_old, q_old = quadratic.interval_blocks(h_prev2, h_prev, np.nan, False, True)
    _, _, g_mid, q_mid = quadratic.interval_blocks(h_prev2, h_prev, h_new, False, False)
    _, _, g_new, q_new = quadratic.interval_blocks(h_prev, h_new, np.nan, False, True)
    return g_old, q_old, g_mid, q_mid, g_new, q_new


def _increment(h_prev2, h_prev, h_new, stable_sum):
    """Rows added to ``C`` and the 3x3 ``Q`` correction when a knot is appended.

    ``stable_sum`` holds the integral rows (over ``p``) of every interval but
    the last; it no longer changes once the knot after an interval is known.

    Returns
    -------
    dC : numpy.ndarray, shape (2, K+1)
        Correction of the old last row of ``C`` and the new last row.
    dQ : numpy.ndarray, shape (3, 3)
        Correction of ``Q`` on ``(p_{K-2}, p_{K-1}, p_K)``.
    stable_sum : numpy.ndarray
        Updated cache, one entry longer.
    """
    n = stable_sum.size  # intervals (and p's) before the update
    K = n + 1
    g_old, q_old, g_mid, q_mid, g_new, q_new = _tail_blocks(h_prev2, h_prev, h_new)
    dC = np.zeros((2, K + 1))
    dC[0, K - 2:] = g_mid - g_old
    new_sum = np.zeros(n + 1)
    new_sum[:n] = stable_sum
    new_sum[n - 2:] += g_mid
    dC[1, 0] = 1.0
    dC[1, 1:] = new_sum
    dC[1, K - 1:] += g_new[:2]
    dQ = q_mid - q_old
    dQ[1:, 1:] += q_new[:2, :2]
    return dC, dQ, new_sum


def quadratic_increment(grid: TimeGrid, t_new: float):
    """``(dC, dQ)`` for appending knot ``t_new`` to ``grid`` (quadratic splines, K >= 5)."""
    if grid.size < MIN_KNOTS[1]:
        raise DataError(f"the quadratic recursion needs K >= {MIN_KNOTS[1]}, got {grid.size}")
    if not t_new > grid.end:
        raise OrderingError(f"new time {t_new!r} is not after last knot {grid.end!r}")
    h = grid.intervals
    stable_sum = quadratic.assemble_c(grid)[-2, 1:]
    dC, dQ, _ = _increment(h[-2], h[-1], t_new - grid.end, stable_sum)
    return dC, dQ


def delta_a(dC: np.ndarray, c_last: np.ndarray, dQ: np.ndarray, lam: float) -> np.ndarray:
    """Dense ``A_{K+1} - pad(A_K)`` from the increments (reference form, O(K^2) memory)."""
    K = c_last.size
    Cs = np.zeros((2, K + 1))
    Cs[0, :K] = c_last
    dA = dC.T @ dC + dC.T @ Cs + Cs.T @ dC
    dA[-3:, -3:] += lam * dQ
    return dA


def zero_order_row(grid: TimeGrid, t_new: float) -> np.ndarray:
    """``H_K = [1, h_1, ..., h_K]``: the row appended to ``C`` for a zero-order spline."""
    if not t_new > grid.end:
        raise OrderingError(f"new time {t_new!r} is not after last knot {grid.end!r}")
    return np.concatenate([[1.0], grid.intervals, [t_new - grid.end]])


def _downdate(rows, P, R):
    """``A -= P R^T`` in place on ``A = rows[:, :K]``.

    ``rows`` is the C-contiguous full-width slab ``buf[:K]``; ``R`` is padded
    with zeros to the buffer width so BLAS can work on the slab directly.
    """
    Rp = np.zeros((rows.shape[1], R.shape[1]))
    Rp[:R.shape[0]] = R
    if P.shape[1] == 1:
        out = blas.dger(-1.0, Rp[:, 0], P[:, 0], a=rows.T, overwrite_a=True)
    else:
        out = blas.dgemm(-1.0, Rp, P, beta=1.0, c=rows.T, trans_b=True, overwrite_c=True)
    if not np.shares_memory(out, rows):
        rows[...] = out.T


def _slack(K):
    return max(16, K // 8)


class RecursiveState:
    """Online solver state for one sample stream.

    Use :meth:`init` (or the module-level :func:`init`) to create it from a
    prefix of samples, then :meth:`update` for every new sample. A state is
    single-writer: serialise updates per stream.

    Parameters
    ----------
    order : {0, 1}
    lam : float
        Penalty weight; must be > 0 to stream zero-order splines.
    refactor_every : int
        Rebuild the inverse from scratch every this many updates (0 disables).
    """

    def __init__(self, order: int, lam: float, refactor_every: int = 0):
        if order not in MIN_KNOTS:
            raise DataError(f"spline order must be 0 or 1, got {order!r}")
        if not (np.isfinite(lam) and lam >= 0):
            raise DataError(f"lambda must be finite and >= 0, got {lam!r}")
        self.order = order
        self.lam = float(lam)
        self.refactor_every = int(refactor_every)
        self.update_count = 0
        self._t: list[float] = []
        self._y: list[float] = []
        # the inverse is the leading block of a square buffer with some spare room
        self._buf = np.zeros((0, 0))
        self.z_hat = np.zeros(0)
        self.b_vec = None  # C^T Y, zero-order only
        self._hrow = None  # last row of C, zero-order only
        self.c_last = None  # last row of C, quadratic only
        self._stable_sum = None

    # -- construction -------------------------------------------------------------

    @classmethod
    def init(cls, prefix: SampleSeries, order: int, lam: float, refactor_every: int = 0) -> "RecursiveState":
        state = cls(order, lam, refactor_every)
        if prefix.grid.size < MIN_KNOTS[order]:
            raise DataError(f"order {order} recursion needs a prefix of at least {MIN_KNOTS[order]} samples, "
                            f"got {prefix.grid.size}")
        state._t = [float(v) for v in prefix.times]
        state._y = [float(v) for v in prefix.values]
        state.refactorize()
        return state

    def refactorize(self) -> "RecursiveState":
        """Recompute the inverse and the solution from scratch (batch solve)."""
        grid = self.grid
        C, Q = batch.design_matrices(grid, self.order)
        Y = np.asarray(self._y)
        self.z_hat, inv = batch.solve_normal(C, Q, Y, self.lam, with_inverse=True)
        self._set_inverse(inv)
        if self.order == 0:
            self.b_vec = C.T @ Y
        else:
            self.c_last = C[-1].copy()
            self._stable_sum = C[-2, 1:].copy()
            self._set_design(C, Q)
        self.update_count = 0
        return self

    def _set_design(self, C, Q):
        """Keep ``C``, ``Y`` and the band of ``Q`` for the refinement step (quadratic only)."""
        K = C.shape[0]
        cap = max(2 * K, 16)
        self._cbuf = np.zeros((cap, cap))
        self._cbuf[:K, :K] = C
        self._ybuf = np.zeros(cap)
        self._ybuf[:K] = self._y
        self._qband = np.zeros((3, cap))
        for d in range(3):
            self._qband[d, :K - d] = np.diagonal(Q, d)

    def _extend_design(self, dC, dQ, y_new):
        K = dC.shape[1] - 1
        if self._cbuf.shape[0] < K + 1:
            cap = 2 * (K + 1)
            cbuf, ybuf, band = np.zeros((cap, cap)), np.zeros(cap), np.zeros((3, cap))
            cbuf[:K, :K] = self._cbuf[:K, :K]
            ybuf[:K] = self._ybuf[:K]
            band[:, :K] = self._qband[:, :K]
            self._cbuf, self._ybuf, self._qband = cbuf, ybuf, band
        self._cbuf[K - 1, :K + 1] += dC[0]
        self._cbuf[K, :K + 1] = dC[1]
        self._ybuf[K] = y_new
        for a in range(3):
            for b in range(a, 3):
                self._qband[b - a, K - 2 + a] += dQ[a, b]

    def _refine(self):
        """One step of iterative refinement of ``z_hat`` against the normal equations."""
        K = self.K
        C, band, z = self._cbuf[:K, :K], self._qband, self.z_hat
        qz = band[0, :K] * z
        qz[:-1] += band[1, :K - 1] * z[1:]
        qz[1:] += band[1, :K - 1] * z[:-1]
        qz[:-2] += band[2, :K - 2] * z[2:]
        qz[2:] += band[2, :K - 2] * z[:-2]
        r = C.T @ (self._ybuf[:K] - C @ z) - self.lam * qz
        self.z_hat = z + self.a_inv @ r

    def _set_inverse(self, inv):
        K = inv.shape[0]
        self._buf = np.zeros((K + _slack(K), K + _slack(K)))
        self._buf[:K, :K] = inv

    def _reserve(self, K):
        """Make room for a K x K inverse. Slack keeps re-layouts to every ~K/8 updates."""
        if self._buf.shape[0] < K:
            old = self._buf
            n = old.shape[0]
            self._buf = np.zeros((K + _slack(K), K + _slack(K)))
            self._buf[:n, :n] = old

    # -- accessors ----------------------------------------------------------------

    @property
    def K(self) -> int:
        return len(self._t)

    @property
    def a_inv(self) -> np.ndarray:
        K = self.K
        return self._buf[:K, :K]

    @property
    def knots(self) -> np.ndarray:
        return np.asarray(self._t)

    @property
    def values(self) -> np.ndarray:
        return np.asarray(self._y)

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self._t)

    @property
    def series(self) -> SampleSeries:
        return SampleSeries(self.grid, self._y)

    def model(self):
        return batch.model_class(self.order).from_params(self.grid, self.z_hat, self.lam)

    def endpoint_estimate(self) -> float:
        """Derivative estimate at the most recent knot."""
        Z = self.z_hat
        if self.order == 0:
            return float(Z[-1])
        t = self._t
        c0, c1 = quadratic._right_boundary(t[-2] - t[-3], t[-1] - t[-2])
        return float(c0 * Z[-2] + c1 * Z[-1])

    # -- updates ------------------------------------------------------------------

    def update(self, t_new: float, y_new: float) -> "RecursiveState":
        """Append one sample; dispatches on the spline order."""
        t_new = float(t_new)
        y_new = float(y_new)
        if not np.isfinite(t_new) or not np.isfinite(y_new):
            raise DataError(f"non-finite sample ({t_new!r}, {y_new!r})")
        if not t_new > self._t[-1]:
            raise OrderingError(f"new time {t_new!r} is not after last knot {self._t[-1]!r}")
        if self.order == 0:
            self._update_zero(t_new, y_new)
        else:
            self._update_quadratic(t_new, y_new)
        self.update_count += 1
        if self.refactor_every and self.update_count >= self.refactor_every:
            self.refactorize()
        return self

    def _update_zero(self, t_new, y_new):
        if self.lam <= 0:
            raise UnsupportedConfigurationError("zero-order recursion needs lambda > 0")
        K = self.K
        h_new = t_new - self._t[-1]
        # new row of C: [1, h_1, ..., h_K]; its first K entries are the previous row
        if self._hrow is None or self._hrow.size != K:
            self._hrow = np.r_[1.0, np.diff(self._t)]
        H = np.append(self._hrow, h_new)
        self._hrow = H
        self._reserve(K + 1)
        buf = self._buf
        # A_s^{-1} = blkdiag(A_K^{-1}, 1/(lam h)); w = A_s^{-1} H
        w = np.empty(K + 1)
        w[:K] = buf[:K, :K] @ H[:K]
        w[K] = 1.0 / self.lam
        u = w / (1.0 + H @ w)
        _downdate(buf[:K], u[:K, None], w[:K, None])
        buf[:K, K] = -u[:K] * w[K]
        buf[K, :K] = -u[K] * w[:K]
        buf[K, K] = 1.0 / (self.lam * h_new) - u[K] * w[K]
        self.b_vec = np.append(self.b_vec, 0.0) + H * y_new
        self._t.append(t_new)
        self._y.append(y_new)
        # A_s^{-1} b_{K+1} = [Z_K; 0] + y w, then the same rank-one correction
        v = np.append(self.z_hat, 0.0) + y_new * w
        self.z_hat = v - u * (H @ v)

    def _update_quadratic(self, t_new, y_new):
        K = self.K
        t = self._t
        h_prev2, h_prev = t[-2] - t[-3], t[-1] - t[-2]
        dC, dQ, new_sum = _increment(h_prev2, h_prev, t_new - t[-1], self._stable_sum)
        lam = self.lam
        d0, d1 = dC[0, :K], dC[1, :K]
        c = self.c_last
        Zp = self.z_hat

        # last column of A_{K+1} (pad(A_K) contributes nothing there)
        Us = d0 * dC[0, K] + d1 * dC[1, K] + c * dC[0, K]
        Us[K - 2:] += lam * dQ[:2, 2]
        a_s = dC[0, K] ** 2 + dC[1, K] ** 2 + lam * dQ[2, 2]

        # b = dC^T [y_K, y_{K+1}] - dA [Z; 0]
        dcz = dC[:, :K] @ Zp
        csz = c @ Zp
        b = dC.T @ np.array([self._y[-1], y_new])
        b -= dC.T @ dcz
        b -= dC.T @ np.array([csz, 0.0])
        b[:K] -= c * dcz[0]
        b[K - 2:] -= lam * (dQ[:, :2] @ Zp[K - 2:])
        bK, b_last = b[:K], b[K]

        A0 = self.a_inv
        G = A0 @ np.column_stack([d0, d1, c, Us, bK])
        A0d0, A0d1, A0c, A0Us, A0b = G.T
        A0J = A0[:, K - 2:]

        # A_s = A_K + D^T (D + S) + S^T D + J (lam dQ_s) J^T, with D = dC[:, :K],
        # S = [c; 0], J the last two unit columns. Each term is one SMW step; the
        # running inverse is kept as A0 - X Y^T and never formed until the end.
        X = np.zeros((K, 0))
        Y = np.zeros((K, 0))
        DT = np.column_stack([d0, d1])
        stages = (
            (DT, np.column_stack([A0d0, A0d1]), np.column_stack([d0 + c, d1]), np.column_stack([A0d0 + A0c, A0d1])),
            (np.column_stack([c, np.zeros(K)]), np.column_stack([A0c, np.zeros(K)]), DT, np.column_stack([A0d0, A0d1])),
            (None, A0J @ (lam * dQ[:2, :2]), None, A0J),
        )
        for U, A0U, V, A0V in stages:
            BU = A0U - X @ (Y.T @ U) if U is not None else A0U - X @ (lam * (Y[K - 2:].T @ dQ[:2, :2]))
            BtV = A0V - Y @ (X.T @ V) if V is not None else A0V - Y @ X[K - 2:].T
            VtBU = V.T @ BU if V is not None else BU[K - 2:]
            inner = np.eye(2) + VtBU
            if np.linalg.cond(inner) > INNER_MAX_CONDITION:
                log.warning("SMW inner system near-singular at K=%d; refactorizing", K)
                self._append_and_refactor(t_new, y_new)
                return
            X = np.column_stack([X, BU @ np.linalg.inv(inner)])
            Y = np.column_stack([Y, BtV])

        # A_s^{-1} = A0 - X Y^T ;  bordering with U_s, a_s
        v = A0Us - X @ (Y.T @ Us)
        w = A0b - X @ (Y.T @ bK)
        schur = a_s - Us @ v
        if not abs(schur) > BREAKDOWN_RTOL * abs(a_s):
            raise NumericalError(
                f"recursive update broke down at K={K} (a_s - U_s^T A_s^-1 U_s = {schur:.3g}); "
                "call refactorize()")
        d_s = 1.0 / schur
        dZ = w + d_s * v * (v @ bK - b_last)
        p_new = (b_last - Us @ dZ) / a_s

        self._reserve(K + 1)
        buf = self._buf
        _downdate(buf[:K], np.column_stack([X, -d_s * v]), np.column_stack([Y, v]))
        buf[:K, K] = -d_s * v
        buf[K, :K] = -d_s * v
        buf[K, K] = d_s

        self.z_hat = np.concatenate([Zp + dZ, [p_new]])
        c_new = dC[1].copy()
        self.c_last = c_new
        self._stable_sum = new_sum
        self._extend_design(dC, dQ, y_new)
        self._t.append(t_new)
        self._y.append(y_new)
        self._refine()

    def _append_and_refactor(self, t_new, y_new):
        self._t.append(t_new)
        self._y.append(y_new)
        self.refactorize()

    # -- snapshots ----------------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": SNAPSHOT_FORMAT,
            "version": 1,
            "order": self.order,
            "lambda": self.lam,
            "refactor_every": self.refactor_every,
            "update_count": self.update_count,
            "knots": list(self._t),
            "samples": list(self._y),
            "z_hat": self.z_hat.tolist(),
            "a_inv": self.a_inv.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RecursiveState":
        if data.get("format") != SNAPSHOT_FORMAT:
            raise DataError(f"not a recursive-state snapshot (format={data.get('format')!r})")
        state = cls(int(data["order"]), float(data["lambda"]), int(data.get("refactor_every", 0)))
        state._t = [float(v) for v in data["knots"]]
        state._y = [float(v) for v in data["samples"]]
        K = len(state._t)
        inv = np.asarray(data["a_inv"], dtype=float)
        z = np.asarray(data["z_hat"], dtype=float)
        if len(state._y) != K or inv.shape != (K, K) or z.shape != (K,):
            raise DataError("inconsistent snapshot: sizes of knots, samples, z_hat and a_inv differ")
        state._set_inverse(inv)
        state.z_hat = z
        state.update_count = int(data.get("update_count", 0))
        C, Q = batch.design_matrices(state.grid, state.order)
        if state.order == 0:
            state.b_vec = C.T @ np.asarray(state._y)
        else:
            state.c_last = C[-1].copy()
            state._stable_sum = C[-2, 1:].copy()
            state._set_design(C, Q)
        return state

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "RecursiveState":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def __repr__(self):
        return f"RecursiveState(order={self.order}, K={self.K}, lam={self.lam:g}, updates={self.update_count})"


def init(prefix: SampleSeries, order: int, lam: float, refactor_every: int = 0) -> RecursiveState:
    return RecursiveState.init(prefix, order, lam, refactor_every)


def update(state: RecursiveState, t_new: float, y_new: float) -> RecursiveState:
    return state.update(t_new, y_new)


def update_quadratic(state: RecursiveState, t_new: float, y_new: float) -> RecursiveState:
    if state.order != 1:
        raise UnsupportedConfigurationError("update_quadratic needs an order-1 state")
    return state.update(t_new, y_new)


def update_zero(state: RecursiveState, t_new: float, y_new: float) -> RecursiveState:
    if state.order != 0:
        raise UnsupportedConfigurationError("update_zero needs an order-0 state")
    return state.update(t_new, y_new)


def endpoint_estimate(state: RecursiveState) -> float:
    return state.endpoint_estimate()


def refactorize(state: RecursiveState) -> RecursiveState:
    return state.refactorize()
