"""Steady-state error metrics."""

from __future__ import annotations

import numpy as np

from .exceptions import DataError
from .signals import TimeGrid

__all__ = ["steady_state_mask", "rmse_full", "rmse"]


def steady_state_mask(grid: TimeGrid) -> np.ndarray:
    """Knots in the final two thirds of the observed span, ``t >= t_1 + (t_K - t_1) / 3``."""
    t = grid.knots
    return t >= t[0] + (t[-1] - t[0]) / 3.0


def rmse(estimates, truth, mask) -> np.ndarray:
    """Root-mean-square error along the last axis over ``mask``; non-finite results become ``inf``."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise DataError("no knots in the steady-state window")
    err = np.asarray(estimates, dtype=float)[..., mask] - np.asarray(truth, dtype=float)[..., mask]
    with np.errstate(over="ignore", invalid="ignore"):
        r = np.sqrt(np.mean(err**2, axis=-1))
    r = np.where(np.isfinite(r), r, np.inf)
    return float(r) if r.ndim == 0 else r


def rmse_full(estimates, truth, grid: TimeGrid):
    """RMSE of knot estimates over knots with ``t >= T/3`` (time measured from the first knot).

    ``estimates`` may carry leading axes (several trajectories at once).
    """
    estimates = np.asarray(estimates, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if estimates.shape[-1] != grid.size or truth.shape[-1] != grid.size:
        raise DataError(
            f"estimates ({estimates.shape[-1]}) and truth ({truth.shape[-1]}) must both have "
            f"one value per knot ({grid.size})")
    return rmse(estimates, truth, steady_state_mask(grid))
