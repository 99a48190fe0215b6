"""
Tests for spatial quasilinearization and the equivalence checks.
"""
import math

import numpy as np
import pytest

from pynlps.data import make_preset, preset_grid
from pynlps.errors import InvalidParameter, MissingDerivativeCallback, UnsupportedMultiComponent
from pynlps.fixedpoint import FixedPointConfig, solve_fully_nonlinear_temporal, solve_quasilinear_fixedpoint
from pynlps.grid import TriangleField, build_grid, jet_at, stencil_apply
from pynlps.linsolve import initial_extension, solve_nonlocal_linear
from pynlps.quasilin import (
    check_equivalence,
    check_exchange_symmetry,
    quasilinearize_spatial,
    solve_fully_nonlinear_spatial,
)
from pynlps.systems import FullyNonlinearSpec


class TestQuasilinearize:
    """Structure of the induced system."""

    def test_roles_and_components(self):
        induced = quasilinearize_spatial(make_preset("fullnl_exp"))
        assert induced.roles == ["u", "v1"]
        assert induced.spec.m == 2
        assert induced.spec.jet_order == 1
        skeleton = induced.skeleton()
        assert skeleton["roles"] == {"0": "u", "1": "v1"}
        assert skeleton["source"]["kind"] == "fully_nonlinear"

    def test_two_dimensional_roles(self):
        induced = quasilinearize_spatial(make_preset("fullnl_exp_2d"))
        assert induced.roles == ["u", "v1", "v2"]
        assert set(induced.spec.A_top) == {(0, 0), (0, 1), (1, 1)}

    def test_top_order_coefficients(self):
        induced = quasilinearize_spatial(make_preset("fullnl_exp"))
        grid = build_grid(T=0.25, n_tau=8, L=2 * math.pi, n_y=16, m=2)
        u0 = initial_extension(induced.spec.g, grid)
        rows = np.arange(1, 9)
        block = grid.block(rows, 1)
        jet = jet_at(u0, rows, 1, 1)
        A = induced.spec.A_top[(0, 0)](block, jet)
        B = induced.spec.B_top[(0, 0)](block, jet)
        np.testing.assert_allclose(A[..., 0, 0], 1.0)
        np.testing.assert_allclose(A[..., 1, 1], 1.0)
        assert not np.any(A[..., 0, 1]) and not np.any(A[..., 1, 0])
        # diagonal slot nq11 is filled from the derivative of the v component
        nq11 = stencil_apply(u0.slice(1, 1), (0,), grid)[:, 1]
        np.testing.assert_allclose(B[..., 1, 1], np.broadcast_to(1 - np.tanh(nq11) ** 2, B.shape[:-2]), rtol=1e-12)

    def test_induced_initial_data(self):
        induced = quasilinearize_spatial(make_preset("fullnl_exp"))
        grid = build_grid(T=1, n_tau=4, L=2 * math.pi, n_y=16, m=2)
        sampled = induced.spec.g.sample(grid)
        t = grid.t_nodes[:, None]
        y = grid.y[0][None, :]
        np.testing.assert_allclose(sampled[..., 0], (1 + t) * np.sin(y), atol=1e-15)
        np.testing.assert_allclose(sampled[..., 1], (1 + t) * np.cos(y), atol=1e-15)

    def test_rejects_systems(self):
        spec = make_preset("fullnl_exp")
        vector = FullyNonlinearSpec(1, 1, spec.F, spec.g, m=2)
        with pytest.raises(UnsupportedMultiComponent):
            quasilinearize_spatial(vector)

    def test_rejects_higher_order(self):
        with pytest.raises(InvalidParameter):
            quasilinearize_spatial(FullyNonlinearSpec.from_terms({"F": "-c1111", "g": "sin(y1)"}, r=2))

    def test_requires_derivatives_without_fd(self):
        with pytest.raises(MissingDerivativeCallback):
            spec = FullyNonlinearSpec.from_terms({"F": "q11 + tanh(nq11)", "g": "sin(y1)"}, allow_fd=False)
            quasilinearize_spatial(spec)


class TestEquivalenceChecks:
    """Residuals of (u, v) against the original scalar problem."""

    def test_exchange_single_direction(self, sin_field):
        assert check_exchange_symmetry([sin_field]) == 0.0

    def test_exchange_of_a_discrete_gradient(self):
        grid = build_grid(T=0.1, n_tau=2, L=2 * math.pi, n_y=16, d=2)
        u = TriangleField.from_function(grid, lambda t, s, y: (1 + t) * np.sin(y[0]) * np.cos(2 * y[1]) + s)
        vs = [TriangleField(grid, stencil_apply(u.data, (k,), grid)) for k in range(2)]
        assert check_exchange_symmetry(vs) <= 1e-12

    def test_exchange_of_a_rotation(self):
        grid = build_grid(T=0.1, n_tau=2, L=2 * math.pi, n_y=16, d=2)
        v1 = TriangleField.from_function(grid, lambda t, s, y: np.sin(y[1]) + 0 * t)
        v2 = TriangleField(grid)
        assert check_exchange_symmetry([v1, v2]) > 0.5

    def test_linear_solution_is_equivalent(self, small_grid):
        u, _ = solve_nonlocal_linear(make_preset("nonlocal_heat_linear"), small_grid)
        v = TriangleField(small_grid, stencil_apply(u.data, (0,), small_grid))
        report = check_equivalence(u, [v], make_preset("fullnl_heat"))
        assert report.grad_residual == 0.0
        assert report.pde_residual <= 1e-9
        assert report.exchange_residual == 0.0


class TestSpatialRoute:
    """Solving a fully-nonlinear problem through its induced system."""

    def test_fullnl_exp(self):
        spec = make_preset("fullnl_exp")
        grid = build_grid(**preset_grid("fullnl_exp"))
        cfg = FixedPointConfig(tol=1e-8, higher_regularity=True)
        u, report = solve_fully_nonlinear_spatial(spec, grid, cfg=cfg)
        assert report.route == "spatial"
        assert u.grid.m == 1
        assert report.distances[-1] <= cfg.tol
        scale = max(1.0, u.sup_norm())
        bound = 10 * (grid.dtau + grid.dy ** 2) * scale
        assert report.diagnostics["grad_residual"] <= bound
        assert report.diagnostics["exchange_residual"] == 0.0
        assert math.isfinite(report.diagnostics["third_difference"])
        assert report.diagnostics["v_norm"] > 0.0

        temporal, temporal_report = solve_fully_nonlinear_temporal(spec, grid, cfg=FixedPointConfig(tol=1e-8))
        assert report.window_steps == temporal_report.window_steps == [grid.n_tau]
        assert u.grid.same_lattice(temporal.grid)
        assert np.max(np.abs(u.data - temporal.data)) <= bound

    def test_residuals_shrink_under_refinement(self):
        spec = make_preset("fullnl_exp")
        grad, pde = [], []
        for n_tau, n_y in ((64, 32), (256, 64)):
            grid = build_grid(T=0.25, n_tau=n_tau, L=2 * math.pi, n_y=n_y)
            _, report = solve_fully_nonlinear_spatial(spec, grid)
            assert report.window_steps == [n_tau]
            grad.append(report.diagnostics["grad_residual"])
            pde.append(report.diagnostics["pde_residual"])
        assert grad[1] * 3 <= grad[0]
        assert pde[1] * 3 <= pde[0]

    def test_contraction_of_the_induced_system(self):
        induced = quasilinearize_spatial(make_preset("fullnl_exp"))
        cfg = FixedPointConfig(tol=1e-8)
        tails = []
        for T, n_tau in ((0.25, 64), (0.125, 32), (0.0625, 16)):
            grid = build_grid(T=T, n_tau=n_tau, L=2 * math.pi, n_y=32, m=induced.spec.m)
            _, report = solve_quasilinear_fixedpoint(induced.spec, grid, cfg=cfg)
            assert report.window_steps == [n_tau]
            assert report.certificate <= 2 * cfg.tol
            tail = report.distances[1:]
            assert all(b < a for a, b in zip(tail, tail[1:]))
            assert report.tail_ratio <= 0.5
            tails.append(report.tail_ratio)
        assert tails[0] >= tails[1] >= tails[2]

    def test_exchange_shrinks_under_refinement(self):
        spec = make_preset("fullnl_exp_2d")
        residuals = []
        for n_y, n_tau in ((8, 16), (16, 64)):
            grid = build_grid(T=0.05, n_tau=n_tau, L=2 * math.pi, n_y=n_y, d=2)
            _, report = solve_fully_nonlinear_spatial(spec, grid)
            residuals.append(report.diagnostics["exchange_residual"])
        assert all(math.isfinite(r) for r in residuals)
        assert residuals[1] <= max(residuals[0], 1e-10)
