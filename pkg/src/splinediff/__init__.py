"""Numerical differentiation of noisy, non-uniformly sampled signals with penalised splines."""

from .baselines import HgoState, LevantState, hgo_step, hgo_stream, levant_step, levant_stream, tune_hgo
from .batch import BatchSolution, solve_batch
from .bench import ExperimentResult, GridConfig, MethodParams, rmse_online, run_grid
from .exceptions import (
    DataError,
    DomainError,
    NumericalError,
    OrderingError,
    SplineDiffError,
    UnsupportedConfigurationError,
)
from .metrics import rmse_full
from .quadratic import QuadraticSplineModel
from .recursive import RecursiveState
from .sequential import SequentialEndpointSolver, endpoint_estimates
from .signals import SampleSeries, ScenarioSpec, TimeGrid, load_csv, make_series, benchmark_signal, save_csv
from .zero import ZeroOrderSplineModel

__version__ = "0.1.0"
