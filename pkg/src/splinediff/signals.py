"""
Test signal, non-uniform sampling grids, measurement noise and CSV I/O.

Random draws use numpy's PCG64 generator (``numpy.random.default_rng``).
A scenario seed is split with ``SeedSequence.spawn`` into one stream for the
sampling intervals and one for the noise, so the grid of a scenario does not
depend on its noise level. Gaussian draws come from numpy's ziggurat
transform of uniform variates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import DataError

__all__ = [
    "TimeGrid",
    "SampleSeries",
    "ScenarioSpec",
    "SIGNALS",
    "benchmark_signal",
    "generate_grid",
    "sample_signal",
    "make_series",
    "load_csv",
    "save_csv",
]


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Strictly increasing sampling instants ``t_1 < ... < t_K``."""

    knots: np.ndarray
    intervals: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        t = _frozen(self.knots)
        if t.ndim != 1 or t.size < 2:
            raise DataError("a time grid needs at least 2 knots")
        if not np.all(np.isfinite(t)):
            raise DataError("time grid contains non-finite knots")
        h = np.diff(t)
        bad = np.flatnonzero(h <= 0)
        if bad.size:
            raise DataError(f"knots must be strictly increasing (knot {bad[0] + 2} <= knot {bad[0] + 1})")
        object.__setattr__(self, "knots", t)
        object.__setattr__(self, "intervals", _frozen(h))

    @property
    def size(self) -> int:
        return self.knots.size

    def __len__(self) -> int:
        return self.knots.size

    @property
    def start(self) -> float:
        return float(self.knots[0])

    @property
    def end(self) -> float:
        return float(self.knots[-1])

    def prefix(self, k: int) -> "TimeGrid":
        return TimeGrid(self.knots[:k])


@dataclass(frozen=True, eq=False)
class SampleSeries:
    """Noisy measurements ``y_k`` taken at the knots of ``grid``."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        y = _frozen(self.values)
        if y.shape != (self.grid.size,):
            raise DataError(f"{y.size} values for {self.grid.size} knots")
        object.__setattr__(self, "values", y)

    @classmethod
    def from_arrays(cls, t, y) -> "SampleSeries":
        return cls(TimeGrid(t), y)

    @property
    def times(self) -> np.ndarray:
        return self.grid.knots

    def __len__(self) -> int:
        return self.grid.size

    def prefix(self, k: int) -> "SampleSeries":
        return SampleSeries(self.grid.prefix(k), self.values[:k])


def benchmark_signal(t):
    """Benchmark signal and its exact derivative.

    x(t) = t - 1 + (sin(2 pi t) / (2 pi) + sin(3.1 pi t) / (3.1 pi)) / 2

    Returns
    -------
    (x, z) : tuple of float or numpy.ndarray
        Signal value and derivative ``z = dx/dt``, with the shape of ``t``.
    """
    t = np.asarray(t, dtype=float)
    w1, w2 = 2.0 * np.pi, 3.1 * np.pi
    x = t - 1.0 + 0.5 * (np.sin(w1 * t) / w1 + np.sin(w2 * t) / w2)
    z = 1.0 + 0.5 * (np.cos(w1 * t) + np.cos(w2 * t))
    if x.ndim == 0:
        return float(x), float(z)
    return x, z


SIGNALS = {"benchmark": benchmark_signal}


@dataclass(frozen=True)
class ScenarioSpec:
    """Sampling/noise scenario: nominal step ``h``, noise std ``sigma``, horizon ``T``."""

    h: float
    sigma: float
    T: float = 1.95
    seed: int = 0
    signal: str = "benchmark"

    def __post_init__(self):
        if not (math.isfinite(self.h) and self.h > 0):
            raise DataError(f"nominal step h must be > 0, got {self.h}")
        if not (math.isfinite(self.sigma) and self.sigma >= 0):
            raise DataError(f"noise std sigma must be >= 0, got {self.sigma}")
        if not (math.isfinite(self.T) and self.T > 0):
            raise DataError(f"horizon T must be > 0, got {self.T}")
        if self.signal not in SIGNALS:
            raise DataError(f"unknown signal {self.signal!r}; available: {sorted(SIGNALS)}")

    def with_seed(self, seed: int) -> "ScenarioSpec":
        return ScenarioSpec(self.h, self.sigma, self.T, seed, self.signal)

    def _streams(self):
        grid_seq, noise_seq = np.random.SeedSequence(self.seed).spawn(2)
        return np.random.default_rng(grid_seq), np.random.default_rng(noise_seq)


def generate_grid(spec: ScenarioSpec) -> TimeGrid:
    """Draw ``h_k ~ Uniform[0.5h, 1.5h]`` from ``t_1 = 0`` until ``T`` is reached.

    The knot that would overshoot ``T`` is clamped to ``T``, so the final
    interval may be shorter than ``0.5h``.
    """
    if spec.h >= spec.T:
        raise DataError(f"h = {spec.h} >= T = {spec.T}: fewer than 2 knots")
    rng, _ = spec._streams()
    # enough draws to cover T even if every interval is 0.5h
    n = int(math.ceil(spec.T / (0.5 * spec.h))) + 2
    h = rng.uniform(0.5 * spec.h, 1.5 * spec.h, size=n)
    t = np.cumsum(h)
    last = int(np.searchsorted(t, spec.T, side="left"))
    knots = np.empty(last + 2)
    knots[0] = 0.0
    knots[1:-1] = t[:last]
    knots[-1] = spec.T
    return TimeGrid(knots)


def sample_signal(grid: TimeGrid, spec: ScenarioSpec) -> SampleSeries:
    """Sample the scenario signal at ``grid`` and add N(0, sigma^2) noise."""
    _, rng = spec._streams()
    x, _ = SIGNALS[spec.signal](grid.knots)
    y = x + spec.sigma * rng.standard_normal(grid.size) if spec.sigma > 0 else x
    return SampleSeries(grid, y)


def make_series(spec: ScenarioSpec) -> SampleSeries:
    return sample_signal(generate_grid(spec), spec)


def save_csv(series: SampleSeries, path, header: bool = True) -> None:
    lines = ["t,y"] if header else []
    lines += [f"{t:.17g},{y:.17g}" for t, y in zip(series.times, series.values)]
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_rows(text: str, ncols: int = 2):
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        fields = [f.strip() for f in line.split(",")]
        try:
            vals = [float(f) for f in fields]
        except ValueError:
            if not rows and lineno == 1:
                continue  # header
            raise DataError(f"row {lineno}: non-numeric field in {line!r}") from None
        if len(vals) != ncols:
            raise DataError(f"row {lineno}: expected {ncols} columns, got {len(vals)}")
        if not all(math.isfinite(v) for v in vals):
            raise DataError(f"row {lineno}: non-finite value in {line!r}")
        rows.append((lineno, vals))
    return rows


def load_csv(path) -> SampleSeries:
    """Read a two-column ``t,y`` CSV (header optional) into a :class:`SampleSeries`."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from exc
    rows = _parse_rows(text)
    if len(rows) < 2:
        raise DataError(f"{path}: need at least 2 data rows, found {len(rows)}")
    for (_, (t_prev, _)), (lineno, (t, _)) in zip(rows, rows[1:]):
        if not t > t_prev:
            raise DataError(f"{path}: row {lineno}: time {t!r} is not greater than previous time {t_prev!r}")
    data = np.array([vals for _, vals in rows])
    return SampleSeries.from_arrays(data[:, 0], data[:, 1])
