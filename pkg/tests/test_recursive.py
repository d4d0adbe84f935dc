import numpy as np
import pytest

from conftest import random_grid, random_series
from splinediff import recursive
from splinediff.batch import normal_matrix, solve_batch
from splinediff.exceptions import DataError, NumericalError, OrderingError, UnsupportedConfigurationError
from splinediff.quadratic import assemble_c, assemble_q
from splinediff.recursive import RecursiveState, delta_a, quadratic_increment, zero_order_row
from splinediff.signals import SampleSeries, TimeGrid


def rel_err(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def stream(series, order, lam, k0, **kw):
    state = RecursiveState.init(series.prefix(k0), order, lam, **kw)
    yield state
    for t, y in zip(series.times[k0:], series.values[k0:]):
        state.update(t, y)
        yield state


class TestInit:
    def test_quadratic_matches_batch(self, rng):
        s = random_series(rng, 5)
        state = RecursiveState.init(s, 1, 1e-4)
        assert rel_err(state.z_hat, solve_batch(s, 1, 1e-4).params) < 1e-10

    def test_zero_order_two_knots(self, rng):
        s = random_series(rng, 2)
        state = RecursiveState.init(s, 0, 1e-4)
        A, _, _ = normal_matrix(s.grid, 0, 1e-4)
        np.testing.assert_allclose(state.a_inv @ A, np.eye(2), atol=1e-12)

    def test_quadratic_without_penalty(self, rng):
        s = random_series(rng, 6)
        try:
            state = RecursiveState.init(s, 1, 0.0)
        except NumericalError:
            return
        A, _, _ = normal_matrix(s.grid, 1, 0.0)
        np.testing.assert_allclose(state.a_inv @ A, np.eye(6), atol=1e-6)

    def test_singular_system_error_passes_through(self):
        # identical samples with lambda = 0 leave an order-1 problem well posed,
        # so force singularity through a zero-order grid that cannot be inverted
        s = SampleSeries.from_arrays([0.0, 1e-300, 1.0], [0.0, 0.0, 0.0])
        with pytest.raises(NumericalError):
            RecursiveState.init(s, 0, 0.0)

    @pytest.mark.parametrize("order, k", [(1, 4), (0, 1)])
    def test_prefix_too_short(self, rng, order, k):
        s = random_series(rng, 6).prefix(max(k, 2)) if k >= 2 else None
        with pytest.raises(DataError):
            if s is None:
                RecursiveState(order, 1e-4).init(SampleSeries.from_arrays([0.0], [1.0]), order, 1e-4)
            else:
                RecursiveState.init(s, order, 1e-4)


class TestQuadraticUpdate:
    def test_matches_batch_every_step(self, rng):
        s = random_series(rng, 60, h=0.03)
        for state in stream(s, 1, 1e-4, 5):
            ref = solve_batch(s.prefix(state.K), 1, 1e-4).params
            assert rel_err(state.z_hat, ref) < 1e-8

    def test_inverse_stays_accurate(self, rng):
        s = random_series(rng, 40)
        *_, state = stream(s, 1, 1e-4, 5)
        A, _, _ = normal_matrix(state.grid, 1, 1e-4)
        idx = rng.choice(state.K, 5, replace=False)
        np.testing.assert_allclose((state.a_inv @ A)[idx], np.eye(state.K)[idx], atol=1e-6)

    def test_long_stream_checkpoints(self, rng):
        s = random_series(rng, 500, h=0.004, sigma=1e-3)
        for state in stream(s, 1, 1e-4, 5):
            if state.K % 99 == 0 or state.K == 500:
                assert rel_err(state.z_hat, solve_batch(s.prefix(state.K), 1, 1e-4).params) < 1e-8

    def test_ordering_error(self, rng):
        state = RecursiveState.init(random_series(rng, 6), 1, 1e-4)
        with pytest.raises(OrderingError):
            state.update(state.knots[-1], 0.0)

    def test_non_finite_sample(self, rng):
        state = RecursiveState.init(random_series(rng, 6), 1, 1e-4)
        with pytest.raises(DataError):
            state.update(state.knots[-1] + 0.1, np.nan)

    def test_breakdown_detected(self, rng, monkeypatch):
        monkeypatch.setattr(recursive, "BREAKDOWN_RTOL", 10.0)
        s = random_series(rng, 7)
        state = RecursiveState.init(s.prefix(6), 1, 1e-4)
        with pytest.raises(NumericalError, match="refactorize"):
            state.update(s.times[6], s.values[6])

    def test_inner_breakdown_falls_back_to_refactorization(self, rng, monkeypatch):
        monkeypatch.setattr(recursive, "INNER_MAX_CONDITION", 0.0)
        s = random_series(rng, 12)
        *_, state = stream(s, 1, 1e-4, 5)
        assert rel_err(state.z_hat, solve_batch(s, 1, 1e-4).params) < 1e-10

    def test_module_functions_check_order(self, rng):
        state = recursive.init(random_series(rng, 6), 0, 1e-4)
        with pytest.raises(UnsupportedConfigurationError):
            recursive.update_quadratic(state, 10.0, 0.0)
        state1 = recursive.init(random_series(rng, 6), 1, 1e-4)
        with pytest.raises(UnsupportedConfigurationError):
            recursive.update_zero(state1, 10.0, 0.0)


def closed_form_first_row(a, b, c):
    """Last three entries of the first increment row, ``(a, b, c)`` the final three intervals."""
    return np.array([
        -b**2 / (6 * (a + b)),
        b**2 * (a + 2 * b + c) / (6 * (a + b) * (b + c)),
        -b**2 / (6 * (b + c)),
    ])


def closed_form_dq(a, b, c):
    q11 = -2 * b / (3 * (a + b) ** 2)
    q12 = b * (a + 5 * b + 4 * c) / (6 * (a + b) ** 2 * (b + c))
    q33 = (b + 3 * c) / (3 * (b + c) ** 2)
    q13 = -b / (6 * (a + b) * (b + c))
    q23 = -(2 * a * b + 6 * a * c + 5 * b * c + b**2) / (6 * (a + b) * (b + c) ** 2)
    q22 = (b**2 + 4 * b * c + a * b + c**2 + 3 * a * c) / (3 * (a + b) * (b + c) ** 2) - (a + 3 * b) / (
        3 * (a + b) ** 2)
    return np.array([[q11, q12, q13], [q12, q22, q23], [q13, q23, q33]])


class TestIncrements:
    @pytest.mark.parametrize("K", [5, 6, 9, 20])
    def test_first_row_closed_form(self, rng, K):
        grid = random_grid(rng, K)
        t_new = grid.end + rng.uniform(0.05, 0.15)
        dC, _ = quadratic_increment(grid, t_new)
        a, b, c = np.diff(np.r_[grid.knots[-3:], t_new])
        np.testing.assert_allclose(dC[0, -3:], closed_form_first_row(a, b, c), rtol=1e-12, atol=1e-15)
        assert not dC[0, :-3].any()

    @pytest.mark.parametrize("K", [5, 6, 9, 20])
    def test_second_row_is_new_last_row(self, rng, K):
        grid = random_grid(rng, K)
        t_new = grid.end + rng.uniform(0.05, 0.15)
        dC, _ = quadratic_increment(grid, t_new)
        ext = TimeGrid(np.r_[grid.knots, t_new])
        np.testing.assert_allclose(dC[1], assemble_c(ext)[-1], atol=1e-14)
        h = ext.intervals
        b, c = h[-2], h[-1]
        expected_head = [
            1.0,
            -(3 * h[0] ** 2 + 3 * h[0] * h[1] + h[1] ** 2) / (6 * (h[0] + h[1])),
            -(2 * h[0] * h[1] + h[0] * h[2] + h[1] * h[2] + h[1] ** 2) / (6 * (h[0] + h[1])),
        ]
        np.testing.assert_allclose(dC[1, :3], expected_head, rtol=1e-12)
        assert dC[1, -1] == pytest.approx(-(b**2 + 3 * b * c + 3 * c**2) / (6 * (b + c)), rel=1e-12)

    @pytest.mark.parametrize("K", [5, 6, 9, 20])
    def test_dq_closed_form_and_matrix_difference(self, rng, K):
        grid = random_grid(rng, K)
        t_new = grid.end + rng.uniform(0.05, 0.15)
        _, dQ = quadratic_increment(grid, t_new)
        a, b, c = np.diff(np.r_[grid.knots[-3:], t_new])
        np.testing.assert_allclose(dQ, closed_form_dq(a, b, c), rtol=1e-12, atol=1e-12 * np.abs(dQ).max())
        ext = TimeGrid(np.r_[grid.knots, t_new])
        diff = assemble_q(ext)
        diff[:K, :K] -= assemble_q(grid)
        np.testing.assert_allclose(dQ, diff[-3:, -3:], atol=1e-12 * np.abs(dQ).max())
        assert not diff[:-3].any() and not diff[:, :-3].any()

    def test_as_block_and_b_vector(self, rng):
        lam = 1e-3
        s = random_series(rng, 12)
        for K in range(5, 11):
            grid, Y = s.grid.prefix(K), s.values[:K]
            t_new, y_new = s.times[K], s.values[K]
            ext = s.grid.prefix(K + 1)
            A_K, C_K, _ = normal_matrix(grid, 1, lam)
            A1, C1, _ = normal_matrix(ext, 1, lam)
            dC, dQ = quadratic_increment(grid, t_new)
            dA = delta_a(dC, C_K[-1], dQ, lam)
            padded = np.zeros((K + 1, K + 1))
            padded[:K, :K] = A_K
            np.testing.assert_allclose(padded + dA, A1, atol=1e-12 * np.abs(A1).max())

            # A_s from the three corrections equals the leading block of A_{K+1}
            D = dC[:, :K]
            S = np.zeros((2, K))
            S[0] = C_K[-1]
            J = np.zeros((K, 2))
            J[-2, 0] = J[-1, 1] = 1.0
            A_s = A_K + D.T @ (D + S) + S.T @ D + J @ (lam * dQ[:2, :2]) @ J.T
            np.testing.assert_allclose(A_s, A1[:K, :K], atol=1e-12 * np.abs(A1).max())

            Z = solve_batch(SampleSeries(grid, Y), 1, lam).params
            b = dC.T @ np.array([Y[-1], y_new]) - dA @ np.r_[Z, 0.0]
            direct = C1.T @ s.values[:K + 1] - A1 @ np.r_[Z, 0.0]
            np.testing.assert_allclose(b, direct, atol=1e-12 * max(1.0, np.abs(C1.T @ s.values[:K + 1]).max()))

    def test_increment_needs_five_knots(self, rng):
        with pytest.raises(DataError):
            quadratic_increment(random_grid(rng, 4), 10.0)


class TestZeroOrderUpdate:
    def test_matches_batch_every_step(self, rng):
        s = random_series(rng, 200, h=0.01)
        for state in stream(s, 0, 1e-4, 2):
            assert rel_err(state.z_hat, solve_batch(s.prefix(state.K), 0, 1e-4).params) < 1e-10

    def test_linear_data_near_interpolation(self):
        state = RecursiveState.init(SampleSeries.from_arrays([0.0, 1.0], [1.0, 3.0]), 0, 1e-8)
        state.update(2.0, 5.0)
        np.testing.assert_allclose(state.z_hat, [1.0, 2.0, 2.0], atol=1e-4)

    def test_new_row(self):
        np.testing.assert_array_equal(zero_order_row(TimeGrid([0.0, 0.5, 1.5]), 2.0), [1, 0.5, 1.0, 0.5])

    def test_b_vector_tracks_normal_rhs(self, rng):
        s = random_series(rng, 30)
        *_, state = stream(s, 0, 1e-4, 2)
        _, C, _ = normal_matrix(s.grid, 0, 1e-4)
        np.testing.assert_allclose(state.b_vec, C.T @ s.values, rtol=1e-12, atol=1e-12)

    def test_requires_positive_lambda(self, rng):
        state = RecursiveState.init(random_series(rng, 4), 0, 0.0)
        with pytest.raises(UnsupportedConfigurationError):
            state.update(state.knots[-1] + 0.1, 1.0)


class TestEndpoint:
    def test_linear_signal_gives_its_slope(self, rng):
        t = np.cumsum(np.r_[0.0, rng.uniform(0.05, 0.15, 9)])
        state = RecursiveState.init(SampleSeries.from_arrays(t, 0.5 + 1.7 * t), 1, 1e-4)
        assert state.endpoint_estimate() == pytest.approx(1.7, abs=1e-9)

    def test_zero_order_is_last_parameter(self, rng):
        state = RecursiveState.init(random_series(rng, 6), 0, 1e-4)
        assert state.endpoint_estimate() == state.z_hat[-1]

    @pytest.mark.parametrize("order, k0", [(0, 2), (1, 5)])
    def test_matches_batch_model(self, rng, order, k0):
        s = random_series(rng, 25)
        for state in stream(s, order, 1e-4, k0):
            ref = solve_batch(s.prefix(state.K), order, 1e-4).model(state.knots[-1])
            assert state.endpoint_estimate() == pytest.approx(ref, rel=1e-8, abs=1e-8)


class TestRefactorize:
    def test_drift_after_many_updates(self, rng):
        s = random_series(rng, 1005, h=0.002, sigma=1e-3)
        *_, state = stream(s, 1, 1e-4, 5)
        before = state.z_hat.copy()
        state.refactorize()
        assert rel_err(before, state.z_hat) <= 1e-6

    def test_idempotent(self, rng):
        state = RecursiveState.init(random_series(rng, 30), 1, 1e-4)
        a = state.refactorize().z_hat.copy()
        b = state.refactorize().z_hat
        assert np.max(np.abs(a - b)) <= 1e-14 * np.abs(a).max()

    def test_repairs_perturbed_inverse(self, rng):
        s = random_series(rng, 30)
        state = RecursiveState.init(s.prefix(20), 1, 1e-4)
        state.a_inv[:] += 1e-4 * rng.standard_normal(state.a_inv.shape)
        state.refactorize()
        for t, y in zip(s.times[20:], s.values[20:]):
            state.update(t, y)
        assert rel_err(state.z_hat, solve_batch(s, 1, 1e-4).params) < 1e-10

    def test_periodic_refactorization(self, rng):
        s = random_series(rng, 20)
        states = list(stream(s, 1, 1e-4, 5, refactor_every=4))
        assert states[-1].update_count == (20 - 5) % 4
        assert rel_err(states[-1].z_hat, solve_batch(s, 1, 1e-4).params) < 1e-10


@pytest.mark.parametrize("order, k0", [(0, 2), (1, 5)])
def test_snapshot_round_trip(tmp_path, rng, order, k0):
    s = random_series(rng, 40)
    state = RecursiveState.init(s.prefix(20), order, 1e-4)
    state.save(tmp_path / "state.json")
    restored = RecursiveState.load(tmp_path / "state.json")
    np.testing.assert_array_equal(restored.z_hat, state.z_hat)
    for t, y in zip(s.times[20:], s.values[20:]):
        restored.update(t, y)
    assert rel_err(restored.z_hat, solve_batch(s, order, 1e-4).params) < 1e-10


def test_snapshot_rejects_foreign_json():
    with pytest.raises(DataError):
        RecursiveState.from_dict({"format": "something-else"})
