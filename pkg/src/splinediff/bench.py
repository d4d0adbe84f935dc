"""
Benchmark harness for the four differentiators over a grid of (h, sigma)
scenarios and seeds, scored in the full-interval and online settings.
"""

from __future__ import annotations

import configparser
import csv
import io
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import baselines
from .batch import solve_batch
from .exceptions import DataError, SplineDiffError
from .metrics import rmse, rmse_full, steady_state_mask
from .recursive import RecursiveState
from .sequential import endpoint_estimates
from .signals import SIGNALS, SampleSeries, ScenarioSpec, make_series

log = logging.getLogger(__name__)

METHODS = ("spline2", "spline0", "levant", "hgo")
SCENARIOS = ("full", "online")
SPLINE_ORDER = {"spline2": 1, "spline0": 0}
# first prefix size scored online
ONLINE_MIN_KNOTS = {"spline2": 5, "spline0": 2, "levant": 1, "hgo": 1}

# (h, sigma) rows of the reference experiment grid
DEFAULT_ROWS = (
    (0.0002, 1e-7),
    (0.001, 1e-7),
    (0.001, 1e-4),
    (0.001, 1e-2),
    (0.01, 1e-4),
    (0.05, 1e-4),
    (0.075, 1e-3),
)

__all__ = [
    "METHODS",
    "MethodParams",
    "GridConfig",
    "ExperimentResult",
    "full_estimates",
    "online_estimates",
    "rmse_online",
    "run_grid",
    "results_csv",
    "results_table",
    "write_outputs",
    "load_config",
]


@dataclass(frozen=True)
class MethodParams:
    """Tuning of the four methods.

    ``lam0`` overrides ``lam`` for the zero-order spline; ``hgo_eps=None``
    means tune it per scenario. ``online_solver`` selects how spline endpoint
    estimates are advanced: ``"recursive"`` (dense O(K^2) update),
    ``"sequential"`` (O(1) forward elimination) or ``"auto"``, which uses the
    recursive update up to ``recursive_max_knots`` samples.
    """

    lam: float = 1e-4
    lam0: Optional[float] = None
    levant_L: float = baselines.DEFAULT_LEVANT_L
    hgo_eps: Optional[float] = None
    sat_level: float = baselines.DEFAULT_SAT_LEVEL
    online_solver: str = "auto"
    recursive_max_knots: int = 400

    def spline_lambda(self, method: str) -> float:
        if method == "spline0" and self.lam0 is not None:
            return self.lam0
        return self.lam


@dataclass(frozen=True)
class GridConfig:
    rows: tuple = DEFAULT_ROWS
    seeds: tuple = tuple(range(10))
    methods: tuple = METHODS
    params: MethodParams = MethodParams()
    T: float = 1.95
    online: bool = True
    tuning_seed: int = baselines.TUNING_SEED

    def __post_init__(self):
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise DataError(f"unknown methods {unknown}; choose from {list(METHODS)}")
        if not self.rows:
            raise DataError("experiment grid has no rows")
        if not self.seeds:
            raise DataError("experiment grid has no seeds")
        if self.tuning_seed in self.seeds:
            raise DataError(f"tuning seed {self.tuning_seed} must differ from evaluation seeds")


@dataclass
class ExperimentResult:
    """Scores of one method on one (h, sigma) row across seeds; NaN marks a failed seed."""

    scenario: ScenarioSpec
    method: str
    seeds: list
    per_seed_full: np.ndarray
    per_seed_online: np.ndarray
    errors: list = field(default_factory=list)
    hgo_eps: Optional[float] = None

    @staticmethod
    def _median(values):
        v = np.asarray(values, dtype=float)
        v = v[~np.isnan(v)]
        return float(np.median(v)) if v.size else float("nan")

    @property
    def rmse_full(self) -> float:
        return self._median(self.per_seed_full)

    @property
    def rmse_online(self) -> float:
        return self._median(self.per_seed_online)

    def rmse(self, scenario: str) -> float:
        return self.rmse_full if scenario == "full" else self.rmse_online


def truth_at(series: SampleSeries, spec: ScenarioSpec) -> np.ndarray:
    return SIGNALS[spec.signal](series.times)[1]


def _baseline_stream(method: str, series: SampleSeries, params: MethodParams, eps: Optional[float]):
    if method == "levant":
        return baselines.levant_stream(series, params.levant_L)
    if eps is None:
        raise DataError("HGO needs an epsilon (tune it first)")
    return baselines.hgo_stream(series, eps, params.sat_level)


def full_estimates(method: str, series: SampleSeries, params: MethodParams = MethodParams(),
                   eps: Optional[float] = None) -> np.ndarray:
    """Knot derivative estimates with every sample available."""
    if method in SPLINE_ORDER:
        fit = solve_batch(series, SPLINE_ORDER[method], params.spline_lambda(method))
        return np.asarray(fit.model.knot_derivatives)
    return _baseline_stream(method, series, params, eps)


def _recursive_endpoints(series: SampleSeries, order: int, lam: float, k0: int) -> np.ndarray:
    out = np.full(len(series), np.nan)
    state = RecursiveState.init(series.prefix(k0), order, lam)
    out[k0 - 1] = state.endpoint_estimate()
    for k in range(k0, len(series)):
        state.update(series.times[k], series.values[k])
        out[k] = state.endpoint_estimate()
    return out


def online_estimates(method: str, series: SampleSeries, params: MethodParams = MethodParams(),
                     eps: Optional[float] = None) -> np.ndarray:
    """Endpoint estimate of every prefix; NaN before the method's first scored prefix.

    Baselines are causal, so their stream output already is the online answer.
    """
    k0 = ONLINE_MIN_KNOTS[method]
    if len(series) < k0:
        raise DataError(f"{method} needs at least {k0} samples online, got {len(series)}")
    if method not in SPLINE_ORDER:
        return _baseline_stream(method, series, params, eps)
    order, lam = SPLINE_ORDER[method], params.spline_lambda(method)
    solver = params.online_solver
    if solver == "auto":
        solver = "recursive" if len(series) <= params.recursive_max_knots else "sequential"
    if solver == "recursive":
        return _recursive_endpoints(series, order, lam, k0)
    if solver != "sequential":
        raise DataError(f"unknown online solver {params.online_solver!r}")
    out = endpoint_estimates(series, order, lam)
    out[:k0 - 1] = np.nan
    return out


def rmse_online(series: SampleSeries, method: str, params: MethodParams = MethodParams(),
                truth=None, eps: Optional[float] = None, spec: Optional[ScenarioSpec] = None) -> float:
    """RMSE of endpoint estimates over prefixes ending at ``t >= T/3``.

    ``truth`` defaults to the derivative of ``spec``'s signal at the knots.
    """
    if truth is None:
        truth = truth_at(series, spec or ScenarioSpec(h=1.0, sigma=0.0))
    est = online_estimates(method, series, params, eps)
    mask = steady_state_mask(series.grid) & ~np.isnan(est)
    return rmse(est, truth, mask)


def _run_cell(method, series, truth, params, eps, online):
    full = rmse_full(full_estimates(method, series, params, eps), truth, series.grid)
    on = np.nan
    if online:
        est = online_estimates(method, series, params, eps)
        on = rmse(est, truth, steady_state_mask(series.grid) & ~np.isnan(est))
    return full, on


def run_grid(config: GridConfig = GridConfig()) -> list:
    """Score every method on every row and seed; failures are recorded per cell."""
    results = []
    for h, sigma in config.rows:
        spec = ScenarioSpec(h=h, sigma=sigma, T=config.T)
        eps = config.params.hgo_eps
        tune_error = None
        if "hgo" in config.methods and eps is None:
            try:
                eps = baselines.tune_hgo(spec, config.params.sat_level, tuning_seed=config.tuning_seed)
            except SplineDiffError as exc:
                tune_error = f"tuning failed: {exc}"
        cells = {m: ExperimentResult(spec, m, list(config.seeds),
                                     np.full(len(config.seeds), np.nan),
                                     np.full(len(config.seeds), np.nan),
                                     hgo_eps=eps if m == "hgo" else None)
                 for m in config.methods}
        for i, seed in enumerate(config.seeds):
            series = make_series(spec.with_seed(seed))
            truth = truth_at(series, spec)
            for m in config.methods:
                cell = cells[m]
                if m == "hgo" and tune_error:
                    cell.errors.append(f"seed {seed}: {tune_error}")
                    continue
                try:
                    cell.per_seed_full[i], cell.per_seed_online[i] = _run_cell(
                        m, series, truth, config.params, eps, config.online)
                except (SplineDiffError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
                    msg = f"h={h:g}, sigma={sigma:g}, {m}, seed {seed}: {exc}"
                    log.warning("cell failed: %s", msg)
                    cell.errors.append(msg)
        results.extend(cells[m] for m in config.methods)
    return results


def _fmt(x: float) -> str:
    return "nan" if np.isnan(x) else f"{x:.17g}"


def results_csv(results) -> str:
    """Long-format CSV: one line per seed plus a median line per (row, method, scenario)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["h", "sigma", "scenario", "method", "seed", "rmse"])
    for r in results:
        for scenario, values in (("full", r.per_seed_full), ("online", r.per_seed_online)):
            for seed, v in zip(r.seeds, values):
                w.writerow([_fmt(r.scenario.h), _fmt(r.scenario.sigma), scenario, r.method, seed, _fmt(v)])
            w.writerow([_fmt(r.scenario.h), _fmt(r.scenario.sigma), scenario, r.method, "median",
                        _fmt(r.rmse(scenario))])
    return buf.getvalue()


def _rows_of(results):
    rows = {}
    for r in results:
        rows.setdefault((r.scenario.h, r.scenario.sigma), {})[r.method] = r
    return rows


def results_table(results, scenarios=SCENARIOS) -> str:
    """Aligned text tables of median RMSE; ``**`` marks the best and ``*`` the runner-up."""
    rows = _rows_of(results)
    methods = [m for m in METHODS if any(m in cells for cells in rows.values())]
    out = []
    for scenario in scenarios:
        header = ["parameters"] + methods
        lines = [header]
        for (h, sigma), cells in rows.items():
            vals = {m: cells[m].rmse(scenario) for m in methods if m in cells}
            ranked = sorted((v, m) for m, v in vals.items() if np.isfinite(v))
            marks = {}
            if ranked:
                marks[ranked[0][1]] = "**"
            if len(ranked) > 1:
                marks[ranked[1][1]] = "*"
            line = [f"h={h:g}, sigma={sigma:g}"]
            for m in methods:
                v = vals.get(m, np.nan)
                line.append(("failed" if np.isnan(v) else f"{v:.4f}") + marks.get(m, ""))
            lines.append(line)
        widths = [max(len(l[i]) for l in lines) for i in range(len(header))]
        title = "full interval" if scenario == "full" else "online (endpoint)"
        out.append(f"RMSE after transients, {title} scenario")
        for l in lines:
            out.append("  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(l, widths))))
        out.append("")
    out.append("** best, * second best")
    return "\n".join(out) + "\n"


def plot_data(spec: ScenarioSpec, config: GridConfig, scenario: str = "full") -> str:
    """CSV with columns t, z_true and one estimate column per method (first seed)."""
    series = make_series(spec.with_seed(config.seeds[0]))
    eps = config.params.hgo_eps
    if "hgo" in config.methods and eps is None:
        eps = baselines.tune_hgo(spec, config.params.sat_level, tuning_seed=config.tuning_seed)
    cols = [series.times, truth_at(series, spec)]
    names = ["t", "z_true"]
    for m in config.methods:
        fn = full_estimates if scenario == "full" else online_estimates
        try:
            cols.append(fn(m, series, config.params, eps))
        except SplineDiffError as exc:
            log.warning("plot data for %s failed: %s", m, exc)
            cols.append(np.full(len(series), np.nan))
        names.append(f"z_{m}")
    buf = io.StringIO()
    buf.write(",".join(names) + "\n")
    for row in zip(*cols):
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def write_outputs(results, config: GridConfig, outdir, plots: bool = True) -> list:
    """Write results.csv, table.txt and (optionally) plot-data files; returns the paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    scenarios = SCENARIOS if config.online else ("full",)
    paths = [outdir / "results.csv", outdir / "table.txt"]
    paths[0].write_text(results_csv(results))
    paths[1].write_text(results_table(results, scenarios))
    if plots:
        for h, sigma in config.rows:
            spec = ScenarioSpec(h=h, sigma=sigma, T=config.T)
            for scenario in scenarios:
                p = outdir / f"plot_h{h:g}_sigma{sigma:g}_{scenario}.csv"
                p.write_text(plot_data(spec, config, scenario))
                paths.append(p)
    return paths


def _parse_float(section, key, raw):
    try:
        return float(raw)
    except ValueError:
        raise DataError(f"config [{section}] {key} = {raw!r} is not a number") from None


def load_config(path) -> GridConfig:
    """Read an INI-style grid description.

    ``[grid]`` holds global keys (seeds, lambda, lambda0, levant_L, hgo_eps,
    sat_level, T, online, methods, online_solver, recursive_max_knots,
    tuning_seed); every section whose name starts with ``row`` must give ``h``
    and ``sigma``. ``seeds`` is a count or a comma-separated list;
    ``hgo_eps = tune`` asks for the grid search.
    """
    path = Path(path)
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise DataError(f"malformed config {path}: {exc}") from exc

    g = parser["grid"] if parser.has_section("grid") else {}
    kw, pk = {}, {}
    if "seeds" in g:
        raw = g["seeds"]
        try:
            kw["seeds"] = tuple(int(s) for s in raw.split(",")) if "," in raw else tuple(range(int(raw)))
        except ValueError:
            raise DataError(f"config [grid] seeds = {raw!r} is not a count or list of integers") from None
    for key, name in (("lambda", "lam"), ("lambda0", "lam0"), ("levant_L", "levant_L"), ("sat_level", "sat_level")):
        if key in g:
            pk[name] = _parse_float("grid", key, g[key])
    if "hgo_eps" in g and g["hgo_eps"].strip().lower() != "tune":
        pk["hgo_eps"] = _parse_float("grid", "hgo_eps", g["hgo_eps"])
    if "online_solver" in g:
        pk["online_solver"] = g["online_solver"].strip()
    if "recursive_max_knots" in g:
        pk["recursive_max_knots"] = int(_parse_float("grid", "recursive_max_knots", g["recursive_max_knots"]))
    if "T" in g:
        kw["T"] = _parse_float("grid", "T", g["T"])
    if "online" in g:
        kw["online"] = parser.getboolean("grid", "online")
    if "methods" in g:
        kw["methods"] = tuple(m.strip() for m in g["methods"].split(",") if m.strip())
    if "tuning_seed" in g:
        kw["tuning_seed"] = int(_parse_float("grid", "tuning_seed", g["tuning_seed"]))

    rows = []
    for name in parser.sections():
        if not name.lower().startswith("row"):
            continue
        sec = parser[name]
        missing = [k for k in ("h", "sigma") if k not in sec]
        if missing:
            raise DataError(f"config [{name}] is missing {', '.join(missing)}")
        rows.append((_parse_float(name, "h", sec["h"]), _parse_float(name, "sigma", sec["sigma"])))
    if rows:
        kw["rows"] = tuple(rows)
    return GridConfig(params=replace(MethodParams(), **pk), **kw)
