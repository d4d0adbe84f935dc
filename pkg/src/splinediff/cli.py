"""
Command-line entry point.

    splinediff simulate --h 0.01 --sigma 1e-4 --seed 3 --out data.csv
    splinediff estimate data.csv --order 1 --lambda 1e-4 --out z.csv
    splinediff bench --seeds 10 --out results/

Exit codes: 0 success, 1 usage error, 2 bad input data, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import baselines
from .batch import solve_batch
from .bench import GridConfig, MethodParams, load_config, online_estimates, run_grid, write_outputs
from .exceptions import DataError, NumericalError, SplineDiffError, UnsupportedConfigurationError
from .signals import ScenarioSpec, load_csv, make_series, save_csv

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("splinediff")


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; usage errors are 1 here."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
    return v


def _nonneg(text):
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="splinediff", description="Spline-based numerical differentiation of sampled data.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="generate a noisy sample CSV of the benchmark signal")
    s.add_argument("--h", type=_positive, required=True, help="nominal sampling step")
    s.add_argument("--sigma", type=_nonneg, default=0.0, help="noise standard deviation")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--T", type=_positive, default=1.95, help="horizon")
    s.add_argument("--out", default="-", help="output CSV (default stdout)")

    e = sub.add_parser("estimate", help="estimate derivatives from a (t, y) CSV")
    e.add_argument("input", help="CSV with columns t, y")
    e.add_argument("--method", choices=["spline", "levant", "hgo"], default="spline")
    e.add_argument("--order", type=int, choices=[0, 1], default=1, help="spline order")
    e.add_argument("--lambda", dest="lam", type=_nonneg, default=1e-4, help="penalty weight")
    e.add_argument("--online", action="store_true",
                   help="report the endpoint estimate of each prefix instead of the full fit")
    e.add_argument("--levant-L", dest="levant_L", type=_positive, default=baselines.DEFAULT_LEVANT_L)
    e.add_argument("--hgo-eps", dest="hgo_eps", type=_positive, default=None)
    e.add_argument("--sat-level", type=_positive, default=baselines.DEFAULT_SAT_LEVEL)
    e.add_argument("--out", default="-", help="output CSV of (t, z) at the knots (default stdout)")
    e.add_argument("--dense", default=None,
                   help="dense (t, z) evaluation file for splines (default: <out>_dense.csv)")
    e.add_argument("--resolution", type=int, default=10, help="dense points per interval")

    b = sub.add_parser("bench", help="run the method comparison grid")
    b.add_argument("--config", type=Path, default=None, help="INI file with [grid] and [row ...] sections")
    b.add_argument("--h", type=_positive, default=None, help="run a single row with this step")
    b.add_argument("--sigma", type=_nonneg, default=None, help="noise of the single row")
    b.add_argument("--seed", type=int, default=None, help="run a single seed")
    b.add_argument("--seeds", type=int, default=None, help="number of seeds (0..N-1)")
    b.add_argument("--lambda", dest="lam", type=_nonneg, default=None)
    b.add_argument("--levant-L", dest="levant_L", type=_positive, default=None)
    b.add_argument("--hgo-eps", dest="hgo_eps", type=_positive, default=None)
    b.add_argument("--online", action="store_true", default=None, help="also score the online scenario")
    b.add_argument("--full-only", dest="online", action="store_false", help="skip the online scenario")
    b.add_argument("--no-plots", action="store_true", help="skip plot-data files")
    b.add_argument("--out", type=Path, default=Path("bench-out"), help="output directory")
    return p


def _write_csv(lines, path):
    text = "\n".join(lines) + "\n"
    if path == "-":
        sys.stdout.write(text)
    else:
        try:
            Path(path).write_text(text)
        except OSError as exc:
            raise DataError(f"cannot write {path}: {exc}") from exc


def _xy_lines(t, z, header="t,z"):
    return [header] + [f"{a:.17g},{b:.17g}" for a, b in zip(t, z)]


def cmd_simulate(args) -> int:
    series = make_series(ScenarioSpec(h=args.h, sigma=args.sigma, T=args.T, seed=args.seed))
    if args.out == "-":
        _write_csv(_xy_lines(series.times, series.values, "t,y"), "-")
    else:
        save_csv(series, args.out)
    log.info("wrote %d samples", len(series))
    return EXIT_OK


def _dense_path(args):
    if args.dense:
        return args.dense
    if args.out == "-":
        return None
    out = Path(args.out)
    return str(out.with_name(out.stem + "_dense" + (out.suffix or ".csv")))


def cmd_estimate(args) -> int:
    series = load_csv(args.input)
    if args.method == "hgo" and args.hgo_eps is None:
        raise UnsupportedConfigurationError("--method hgo needs --hgo-eps (no scenario to tune on)")
    if args.resolution < 1:
        raise UnsupportedConfigurationError(f"--resolution must be >= 1, got {args.resolution}")

    if args.method != "spline":
        if args.method == "levant":
            z = baselines.levant_stream(series, args.levant_L)
        else:
            z = baselines.hgo_stream(series, args.hgo_eps, args.sat_level)
        _write_csv(_xy_lines(series.times, z), args.out)
        return EXIT_OK

    if args.online:
        method = "spline2" if args.order == 1 else "spline0"
        # recursive update for moderate lengths, forward elimination beyond
        params = MethodParams(lam=args.lam, recursive_max_knots=2000)
        z = online_estimates(method, series, params)
    model = solve_batch(series, args.order, args.lam).model
    if not args.online:
        z = model.knot_derivatives
    _write_csv(_xy_lines(series.times, z), args.out)

    dense = _dense_path(args)
    if dense:
        knots = series.times
        frac = np.arange(args.resolution) / args.resolution
        td = np.concatenate([(knots[:-1, None] + np.diff(knots)[:, None] * frac).ravel(), knots[-1:]])
        _write_csv(_xy_lines(td, model.derivative(td)), dense)
    return EXIT_OK


def _bench_config(args) -> GridConfig:
    cfg = load_config(args.config) if args.config else GridConfig()
    kw, pk = {}, {}
    if args.h is not None or args.sigma is not None:
        if args.h is None:
            raise UnsupportedConfigurationError("--sigma needs --h")
        kw["rows"] = ((args.h, args.sigma if args.sigma is not None else 0.0),)
    if args.seed is not None and args.seeds is not None:
        raise UnsupportedConfigurationError("give either --seed or --seeds, not both")
    if args.seed is not None:
        kw["seeds"] = (args.seed,)
    if args.seeds is not None:
        if args.seeds < 1:
            raise UnsupportedConfigurationError(f"--seeds must be >= 1, got {args.seeds}")
        kw["seeds"] = tuple(range(args.seeds))
    if args.online is not None:
        kw["online"] = args.online
    for key in ("lam", "levant_L", "hgo_eps"):
        if getattr(args, key) is not None:
            pk[key] = getattr(args, key)
    return replace(cfg, params=replace(cfg.params, **pk), **kw)


def cmd_bench(args) -> int:
    cfg = _bench_config(args)
    results = run_grid(cfg)
    paths = write_outputs(results, cfg, args.out, plots=not args.no_plots)
    sys.stdout.write((args.out / "table.txt").read_text())
    failed = sum(len(r.errors) for r in results)
    if failed:
        log.warning("%d cells failed; see results.csv", failed)
    log.info("wrote %s", ", ".join(str(p) for p in paths))
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "estimate": cmd_estimate, "bench": cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UnsupportedConfigurationError as exc:
        print(f"splinediff: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"splinediff: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (SplineDiffError, OSError) as exc:
        print(f"splinediff: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
