"""
Tests for the fixed-point drivers, the temporal maps and the residual helpers.
"""
import math

import numpy as np
import pytest

from pynlps.data import make_preset, preset_grid
from pynlps.errors import BallExit, InvalidParameter, MaxIterExceeded
from pynlps.fixedpoint import (
    FixedPointConfig,
    discrete_residual,
    frozen_linear_spec,
    gamma_map,
    jet_distance,
    second_s_difference,
    solve_fully_nonlinear_temporal,
    solve_quasilinear_fixedpoint,
    temporal_N,
)
from pynlps.grid import TriangleField, build_grid
from pynlps.linsolve import initial_extension, solve_nonlocal_linear
from pynlps.systems import InitialData, QuasilinearSystemSpec


@pytest.fixture
def demo():
    return make_preset("quasilinear_demo")


class TestConfig:
    """Tests for FixedPointConfig validation."""

    @pytest.mark.parametrize("kwargs", [{"tol": 0.0}, {"target_ratio": 1.0}, {"shrink": 1.5}, {"max_iter": 0},
                                        {"ball_radius": -1.0}, {"alpha": 1.0}])
    def test_rejects(self, kwargs):
        with pytest.raises(InvalidParameter):
            FixedPointConfig(**kwargs)

    def test_defaults(self):
        cfg = FixedPointConfig()
        assert cfg.tol == 1e-8
        assert cfg.max_iter == 50
        assert cfg.to_dict()["shrink"] == 0.5


class TestTemporalIntegration:
    """temporal_N integrates w1 in s with the trapezoid rule."""

    def test_constant_integrand(self):
        grid = build_grid(T=1, n_tau=8, L=2 * math.pi, n_y=16)
        g = InitialData.from_expressions("(1 + t) * sin(y1)")
        w1 = TriangleField.from_function(grid, lambda t, s, y: 2.5 + 0 * t + 0 * y[0])
        U = temporal_N(w1, g)
        for i in range(grid.n_tau + 1):
            for j in range(i + 1):
                expected = g.at(grid.t_nodes[i], grid) + 2.5 * j * grid.dtau
                np.testing.assert_allclose(U.slice(i, j), expected, rtol=0, atol=1e-13)

    def test_linear_integrand(self):
        grid = build_grid(T=1, n_tau=8, L=2 * math.pi, n_y=16)
        g = InitialData.from_expressions("cos(y1)")
        w1 = TriangleField.from_function(grid, lambda t, s, y: s * np.sin(y[0]) + 0 * t)
        U = temporal_N(w1, g)
        y = grid.y[0][:, None]
        for i in range(grid.n_tau + 1):
            for j in range(i + 1):
                s = j * grid.dtau
                np.testing.assert_allclose(U.slice(i, j), np.cos(y) + 0.5 * s * s * np.sin(y), rtol=0, atol=1e-13)

    def test_first_level_is_initial_data(self):
        grid = build_grid(T=1, n_tau=4, L=2 * math.pi, n_y=16)
        g = InitialData.from_expressions("(1 + t) * sin(y1)")
        w1 = TriangleField.from_function(grid, lambda t, s, y: np.exp(s) + t + 0 * y[0])
        U = temporal_N(w1, g)
        for i in range(grid.n_tau + 1):
            np.testing.assert_array_equal(U.slice(i, 0), g.at(grid.t_nodes[i], grid))


class TestHelpers:
    """Jet distances, residuals and frozen coefficients."""

    def test_jet_distance(self, sin_field):
        assert jet_distance(sin_field, sin_field, 2) == 0.0
        shifted = TriangleField(sin_field.grid, sin_field.data + 0.25)
        assert jet_distance(sin_field, shifted, 2) == pytest.approx(0.25)

    def test_linear_solution_has_no_residual(self, small_grid):
        spec = make_preset("nonlocal_heat_linear")
        u, _ = solve_nonlocal_linear(spec, small_grid)
        assert discrete_residual(u, spec) <= 1e-9

    def test_second_s_difference(self):
        grid = build_grid(T=1, n_tau=8, L=2 * math.pi, n_y=16)
        u = TriangleField.from_function(grid, lambda t, s, y: s * s + 0 * t + 0 * y[0])
        assert second_s_difference(u) == pytest.approx(2.0, rel=1e-9)

    def test_frozen_coefficients(self, demo):
        grid = build_grid(T=0.25, n_tau=8, L=2 * math.pi, n_y=16)
        u0 = initial_extension(demo.g, grid)
        frozen = frozen_linear_spec(demo, u0)
        rows = np.arange(2, 9)
        coef = np.reshape(frozen.A[(0, 0)](grid.block(rows, 2)), (len(rows), grid.n_spatial))
        expected = 1 + 0.5 * np.tanh(u0.data[grid.offsets(rows, 2)][..., 0])
        np.testing.assert_allclose(coef, expected, rtol=1e-14)

    def test_ball_exit(self, demo):
        grid = build_grid(T=0.25, n_tau=8, L=2 * math.pi, n_y=16)
        u0 = initial_extension(demo.g, grid)
        u1 = gamma_map(u0, demo)
        with pytest.raises(BallExit):
            gamma_map(u1, demo, center=u0, radius=1e-12)


class TestQuasilinearDriver:
    """Picard iteration of the frozen-coefficient map."""

    def test_contraction(self, demo):
        cfg = FixedPointConfig(tol=1e-8)
        u, report = solve_quasilinear_fixedpoint(demo, build_grid(**preset_grid("quasilinear_demo")), cfg=cfg)
        assert report.route == "quasilinear"
        assert report.distances[-1] <= cfg.tol
        assert all(r <= 0.5 for r in report.ratios)
        assert report.certificate <= 2 * cfg.tol
        assert report.residual <= 1e-5
        assert report.window_steps == [64]
        assert u.all_finite()

    def test_linear_spec_converges_in_two_steps(self, small_grid):
        linear = make_preset("nonlocal_heat_linear")
        u, report = solve_quasilinear_fixedpoint(QuasilinearSystemSpec.from_linear(linear), small_grid)
        direct, _ = solve_nonlocal_linear(linear, small_grid)
        assert report.iterations == 2
        assert report.distances[-1] == 0.0
        np.testing.assert_allclose(u.data, direct.data, rtol=0, atol=1e-14)

    def test_window_cannot_shrink_forever(self, demo):
        grid = build_grid(T=0.25, n_tau=16, L=2 * math.pi, n_y=16)
        cfg = FixedPointConfig(tol=1e-14, max_iter=1, min_window_steps=4)
        with pytest.raises(MaxIterExceeded):
            solve_quasilinear_fixedpoint(demo, grid, cfg=cfg)

    def test_report_to_dict(self, small_grid):
        spec = QuasilinearSystemSpec.from_linear(make_preset("nonlocal_heat_linear"))
        _, report = solve_quasilinear_fixedpoint(spec, small_grid)
        out = report.to_dict()
        assert out["final_window"] == pytest.approx(small_grid.T)
        assert out["total_iterations"] == 2
        assert out["tail_ratio"] is None


class TestTemporalDriver:
    """The temporal quasilinearization route."""

    def test_heat_map_is_constant(self):
        spec = make_preset("fullnl_heat")
        grid = build_grid(T=0.1, n_tau=16, L=2 * math.pi, n_y=16)
        u, report = solve_fully_nonlinear_temporal(spec, grid)
        assert report.iterations == 2
        assert report.distances[-1] == 0.0
        for i in range(grid.n_tau + 1):
            np.testing.assert_array_equal(u.slice(i, 0), spec.g.at(grid.t_nodes[i], grid))

    def test_heat_close_to_direct_solve(self):
        grid = build_grid(T=0.1, n_tau=16, L=2 * math.pi, n_y=16)
        u, _ = solve_fully_nonlinear_temporal(make_preset("fullnl_heat"), grid)
        direct, _ = solve_nonlocal_linear(make_preset("nonlocal_heat_linear"), grid)
        scale = max(1.0, direct.sup_norm())
        assert np.max(np.abs(u.data - direct.data)) <= 10 * (grid.dtau + grid.dy ** 2) * scale

    def test_fullnl_exp(self):
        cfg = FixedPointConfig(tol=1e-8)
        grid = build_grid(**preset_grid("fullnl_exp"))
        u, report = solve_fully_nonlinear_temporal(make_preset("fullnl_exp"), grid, cfg=cfg)
        assert report.route == "temporal"
        assert report.distances[-1] <= cfg.tol
        assert report.certificate <= 2 * cfg.tol
        assert math.isfinite(report.diagnostics["second_s_difference"])
        assert u.all_finite()
