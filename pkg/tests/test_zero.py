import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import grid_strategy, random_grid
from oracles import design_oracle
from splinediff.exceptions import DataError, DomainError
from splinediff.signals import TimeGrid
from splinediff.zero import ZeroOrderSplineModel, assemble_c, assemble_q

GRID3 = TimeGrid([0.0, 0.5, 1.5])


def piecewise_constant_energy(model):
    """Integral of z(t)^2 by midpoint sampling (exact for constant pieces)."""
    k = model.grid.knots
    mid = 0.5 * (k[:-1] + k[1:])
    return float(np.sum(model(mid) ** 2 * np.diff(k)))


class TestMatrices:
    def test_three_knot_example(self):
        np.testing.assert_array_equal(assemble_c(GRID3), [[1, 0, 0], [1, 0.5, 0], [1, 0.5, 1.0]])
        np.testing.assert_array_equal(assemble_q(GRID3), np.diag([0, 0.5, 1.0]))

    @given(grid_strategy(min_knots=2, max_knots=15))
    def test_determinant_is_interval_product(self, grid):
        C = assemble_c(grid)
        assert np.all(np.triu(C, 1) == 0)
        assert np.linalg.det(C) == pytest.approx(np.prod(grid.intervals), rel=1e-10)

    def test_matches_quadrature(self, rng):
        grid = random_grid(rng, 9)
        np.testing.assert_allclose(assemble_c(grid), design_oracle(grid, ZeroOrderSplineModel), atol=1e-14)

    @given(grid_strategy(min_knots=2, max_knots=15), st.data())
    def test_penalty_is_integral_of_square(self, grid, data):
        z = np.array(data.draw(st.lists(st.floats(-10, 10), min_size=grid.size - 1, max_size=grid.size - 1)))
        m = ZeroOrderSplineModel(grid, 0.0, z)
        Z = m.params
        assert Z @ assemble_q(grid) @ Z == pytest.approx(piecewise_constant_energy(m), rel=1e-12, abs=1e-12)

    def test_single_knot_rejected(self):
        with pytest.raises(DataError):
            ZeroOrderSplineModel(TimeGrid([0.0, 1.0]), 0.0, [1.0, 2.0])


class TestEvaluation:
    def test_end_knot_uses_last_piece(self):
        m = ZeroOrderSplineModel(GRID3, 0.0, [3.0, 7.0])
        assert m(1.5) == 7.0

    def test_constant_model(self):
        m = ZeroOrderSplineModel(GRID3, 1.0, [2.0, 2.0])
        np.testing.assert_array_equal(m(np.linspace(0, 1.5, 17)), 2.0)

    def test_right_open_pieces(self):
        m = ZeroOrderSplineModel(GRID3, 0.0, [3.0, 7.0])
        assert m(np.nextafter(0.5, 0)) == 3.0
        assert m(0.5) == 7.0

    def test_knot_derivatives(self):
        m = ZeroOrderSplineModel(GRID3, 0.0, [3.0, 7.0])
        np.testing.assert_array_equal(m.knot_derivatives, [3.0, 7.0, 7.0])

    @pytest.mark.parametrize("t", [-0.1, 1.6])
    def test_out_of_domain(self, t):
        with pytest.raises(DomainError):
            ZeroOrderSplineModel(GRID3, 0.0, [3.0, 7.0])(t)
