"""
Tests for the sampled ellipticity and assumption checks.
"""
import math

import numpy as np
import pytest

from pynlps.data import make_preset, preset_lambda
from pynlps.errors import InvalidParameter
from pynlps.grid import build_grid
from pynlps.systems import SamplePlan, check_assumption, check_ellipticity


@pytest.fixture
def grid():
    return build_grid(T=0.25, n_tau=8, L=2 * math.pi, n_y=16)


class TestSamplePlan:
    """Tests for the deterministic sample plan."""

    @pytest.mark.parametrize("kwargs", [{"n_levels": 0}, {"y_points": 0}, {"xi_per_dim": 0},
                                        {"v_directions": -1}, {"z_step": 0.0}])
    def test_rejects(self, kwargs):
        with pytest.raises(InvalidParameter):
            SamplePlan(**kwargs)

    def test_nodes_stay_in_the_triangle(self, grid):
        nodes = SamplePlan().nodes(grid)
        assert (0, 0) in nodes and (8, 8) in nodes
        assert all(0 <= j <= i <= grid.n_tau for i, j in nodes)

    def test_directions(self):
        plan = SamplePlan(v_directions=5)
        assert plan.xi(1).tolist() == [[1.0], [-1.0]]
        xi = plan.xi(2)
        np.testing.assert_allclose(np.linalg.norm(xi, axis=1), 1.0)
        v = plan.v(3)
        assert v.shape == (8, 3)
        np.testing.assert_allclose(np.linalg.norm(v, axis=1), 1.0)
        np.testing.assert_array_equal(v, SamplePlan(v_directions=5).v(3))

    def test_z_lattice_is_nested(self):
        plan = SamplePlan(z_step=0.5)
        small = plan.z_lattice(["u"], {"u": 1.0}, 0.5)
        large = plan.z_lattice(["u"], {"u": 1.0}, 1.0)
        assert small[0] == {"u": 1.0}
        assert [z["u"] for z in small[1:]] == [0.5, 1.5]
        assert all(z in large for z in small)


class TestEllipticity:
    """Tests for check_ellipticity."""

    def test_nonlocal_heat(self, grid):
        report = check_ellipticity(make_preset("nonlocal_heat_linear"), grid)
        assert report.passed
        assert report.lambda_est == pytest.approx(preset_lambda("nonlocal_heat_linear"))
        assert report.samples > 0
        assert report.worst_case["which"] == "local"

    def test_negative_diagonal_fails(self, grid):
        report = check_ellipticity(make_preset("heat_negative_B"), grid)
        assert not report.passed
        assert report.lambda_est == 0.0
        assert report.min_ratio == pytest.approx(-1.0)
        assert report.worst_case["which"] == "combined"
        assert report.to_dict()["worst_case"]["xi"] in ([1.0], [-1.0])

    def test_fourth_order_sign(self):
        grid = build_grid(T=0.1, n_tau=8, L=2 * math.pi, n_y=16)
        report = check_ellipticity(make_preset("biharmonic_local"), grid)
        assert report.passed
        assert report.lambda_est == pytest.approx(1.0)

    def test_coupled_system(self):
        grid = build_grid(T=0.5, n_tau=8, L=2 * math.pi, n_y=16, m=2)
        report = check_ellipticity(make_preset("coupled_heat_linear"), grid)
        assert report.passed
        assert report.min_ratio >= preset_lambda("coupled_heat_linear") - 1e-12
        assert report.min_ratio <= 1.0

    def test_jet_dependent_coefficients(self, grid):
        report = check_ellipticity(make_preset("quasilinear_demo"), grid, R0=1.0)
        assert report.passed
        assert report.lambda_est == pytest.approx(1 - 0.5 * math.tanh(1.0), rel=1e-9)
        assert report.worst_case["z"]["u"] == pytest.approx(-1.0)

    def test_fully_nonlinear(self, grid):
        report = check_ellipticity(make_preset("fullnl_exp"), grid)
        assert report.passed
        assert report.lambda_est == pytest.approx(1.0)

    def test_lambda_target(self, grid):
        spec = make_preset("nonlocal_heat_linear")
        assert not check_ellipticity(spec, grid, lambda_target=1.5).passed
        with pytest.raises(InvalidParameter):
            check_ellipticity(spec, grid, lambda_target=0.0)


class TestAssumption:
    """Tests for check_assumption."""

    def test_constant_coefficients(self, grid):
        report = check_assumption(make_preset("nonlocal_heat_linear"), None, 1.0, grid)
        assert report.K_est == pytest.approx(1.0)
        assert report.L_est == 0.0
        assert report.lipschitz_by_argument == {}
        assert report.ellipticity.passed

    def test_quasilinear_demo(self, grid):
        report = check_assumption(make_preset("quasilinear_demo"), {"u": 0.0}, 1.0, grid)
        assert 0.45 <= report.L_est <= 0.5
        assert report.lipschitz_by_argument["u"] == report.L_est
        assert report.lipschitz_by_argument["p1"] == 0.0
        assert report.K_est >= 1.0
        assert report.z_bar == {"u": 0.0, "p1": 0.0, "n": 0.0, "np1": 0.0}
        out = report.to_dict()
        assert out["ellipticity"]["passed"]
        assert "A.q11_{u}" in out["holder_estimates"]

    def test_lipschitz_grows_with_the_ball(self, grid):
        spec = make_preset("quasilinear_demo")
        near = check_assumption(spec, {"u": 2.0}, 0.5, grid)
        far = check_assumption(spec, {"u": 2.0}, 2.0, grid)
        assert near.L_est <= far.L_est

    def test_rejects_radius(self, grid):
        with pytest.raises(InvalidParameter):
            check_assumption(make_preset("quasilinear_demo"), None, 0.0, grid)

    def test_warn_threshold(self, grid, caplog):
        plan = SamplePlan(warn_threshold=0.1)
        with caplog.at_level("WARNING", logger="pynlps.systems.checks"):
            check_assumption(make_preset("nonlocal_heat_linear"), None, 1.0, grid, plan)
        assert "exceed" in caplog.text
