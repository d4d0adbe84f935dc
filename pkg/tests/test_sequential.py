import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_series
from splinediff.batch import solve_batch
from splinediff.exceptions import DataError, OrderingError, UnsupportedConfigurationError
from splinediff.recursive import RecursiveState
from splinediff.sequential import SequentialEndpointSolver, endpoint_estimates


def batch_endpoints(series, order, lam, k0):
    return np.array([solve_batch(series.prefix(k), order, lam).model(series.times[k - 1])
                     for k in range(k0, len(series) + 1)])


@pytest.mark.parametrize("order", [0, 1])
def test_matches_batch_on_every_prefix(rng, order):
    s = random_series(rng, 80, h=0.02, sigma=0.01)
    est = endpoint_estimates(s, order, 1e-4)
    k0 = SequentialEndpointSolver(order, 1e-4).min_knots
    assert np.all(np.isnan(est[:k0 - 1]))
    np.testing.assert_allclose(est[k0 - 1:], batch_endpoints(s, order, 1e-4, k0), rtol=1e-8, atol=1e-8)


@settings(max_examples=20)
@given(st.integers(0, 2**32 - 1), st.sampled_from([0, 1]), st.sampled_from([1e-6, 1e-4, 1e-2, 1.0]))
def test_matches_batch_property(seed, order, lam):
    s = random_series(np.random.default_rng(seed), 25, h=0.05, sigma=0.05)
    k0 = SequentialEndpointSolver(order, lam).min_knots
    ref = batch_endpoints(s, order, lam, k0)
    est = endpoint_estimates(s, order, lam)[k0 - 1:]
    np.testing.assert_allclose(est, ref, rtol=1e-7, atol=1e-7 * (1 + np.abs(ref).max()))


@pytest.mark.parametrize("order, k0", [(0, 2), (1, 5)])
def test_matches_recursive(rng, order, k0):
    s = random_series(rng, 150, h=0.01, sigma=0.01)
    est = endpoint_estimates(s, order, 1e-4)
    state = RecursiveState.init(s.prefix(k0), order, 1e-4)
    rec = [state.endpoint_estimate()]
    for t, y in zip(s.times[k0:], s.values[k0:]):
        state.update(t, y)
        rec.append(state.endpoint_estimate())
    np.testing.assert_allclose(est[k0 - 1:], rec, rtol=1e-8, atol=1e-8)


def test_push_warms_up(rng):
    s = random_series(rng, 6)
    solver = SequentialEndpointSolver(1, 1e-4)
    out = [solver.push(t, y) for t, y in zip(s.times, s.values)]
    first = next(i for i, v in enumerate(out) if v is not None)
    assert first == solver.min_knots - 1
    assert solver.K == 6


def test_long_stream_is_cheap(rng):
    s = random_series(rng, 20000, h=1e-4, sigma=1e-3)
    est = endpoint_estimates(s, 1, 1e-4)
    assert np.all(np.isfinite(est[4:]))


def test_requires_positive_lambda():
    with pytest.raises(UnsupportedConfigurationError):
        SequentialEndpointSolver(1, 0.0)


def test_rejects_bad_samples():
    solver = SequentialEndpointSolver(0, 1e-4)
    solver.push(0.0, 1.0)
    with pytest.raises(OrderingError):
        solver.push(0.0, 2.0)
    with pytest.raises(DataError):
        solver.push(1.0, np.inf)
    with pytest.raises(DataError):
        SequentialEndpointSolver(2, 1e-4)
