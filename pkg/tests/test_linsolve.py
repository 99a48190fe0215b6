"""
Tests for the nonlocal linear solver.
"""
import math

import numpy as np
import pytest

from pynlps.data import make_preset
from pynlps.errors import CflViolation, InvalidParameter
from pynlps.grid import build_grid, stencil_apply
from pynlps.linsolve import (
    SchemeConfig,
    cfl_limit,
    schauder_ratio,
    solve_cyclic_tridiagonal,
    solve_local_family,
    solve_nonlocal_linear,
)
from pynlps.systems import LinearSystemSpec
from pynlps.verify import compare_schemes, heat_reference_stepper, naive_oracle_solve


def forced_heat(f="sin(y1) * (1 + s)", g="(1 + t) * sin(y1)"):
    return LinearSystemSpec.from_terms({"A.q11": "1", "B.q11": "1", "f": f, "g": g}, name="forced_heat")


class TestOracle:
    """The vectorized solver against the nested-loop recurrence."""

    def test_heat_preset_bitwise(self, small_grid):
        spec = make_preset("nonlocal_heat_linear")
        u, _ = solve_nonlocal_linear(spec, small_grid)
        np.testing.assert_array_equal(u.data, naive_oracle_solve(spec, small_grid).data)

    def test_forced_bitwise(self, small_grid):
        spec = forced_heat(f="t * cos(2 * y1) + s")
        u, _ = solve_nonlocal_linear(spec, small_grid)
        np.testing.assert_array_equal(u.data, naive_oracle_solve(spec, small_grid).data)

    def test_coupled_system(self):
        spec = make_preset("coupled_heat_linear")
        grid = build_grid(T=0.1, n_tau=8, n_y=16, m=2)
        u, _ = solve_nonlocal_linear(spec, grid)
        oracle = naive_oracle_solve(spec, grid)
        np.testing.assert_allclose(u.data, oracle.data, rtol=0, atol=1e-13)

    def test_oracle_enforces_cfl(self):
        spec = make_preset("nonlocal_heat_linear")
        with pytest.raises(CflViolation):
            naive_oracle_solve(spec, build_grid(T=1, n_tau=8, n_y=32))


class TestRecurrence:
    """Structural properties of the explicit recurrence."""

    def test_one_step(self):
        grid = build_grid(T=0.01, n_tau=1, L=2 * math.pi, n_y=16)
        u, report = solve_nonlocal_linear(make_preset("nonlocal_heat_linear"), grid)
        y = grid.y[0][:, None]
        g1 = (1 + grid.dtau) * np.sin(y)
        g0 = np.sin(y)
        expected = g1 + grid.dtau * (stencil_apply(g1, (0, 0), grid) + stencil_apply(g0, (0, 0), grid))
        np.testing.assert_allclose(u.slice(1, 1), expected, rtol=0, atol=1e-14)
        np.testing.assert_allclose(u.slice(0, 0), g0, rtol=0, atol=1e-15)
        assert report.levels == 1

    def test_linearity(self, small_grid):
        u1, _ = solve_nonlocal_linear(forced_heat("sin(y1)", "cos(y1)"), small_grid)
        u2, _ = solve_nonlocal_linear(forced_heat("t * cos(2 * y1)", "(1 + t) * sin(3 * y1)"), small_grid)
        combined = forced_heat("2 * sin(y1) - 0.5 * t * cos(2 * y1)", "2 * cos(y1) - 0.5 * (1 + t) * sin(3 * y1)")
        u, _ = solve_nonlocal_linear(combined, small_grid)
        assert np.max(np.abs(u.data - (2 * u1.data - 0.5 * u2.data))) <= 1e-10

    def test_t_independent_data_collapses(self, small_grid):
        u, _ = solve_nonlocal_linear(forced_heat("s * sin(y1)", "cos(y1)"), small_grid)
        n = small_grid.n_tau
        for j in range(n + 1):
            for i in range(j, n + 1):
                np.testing.assert_array_equal(u.slice(i, j), u.slice(n, j))

    def test_zero_data_gives_zero(self, small_grid):
        u, report = solve_nonlocal_linear(forced_heat("0", "0"), small_grid)
        assert not np.any(u.data)
        assert report.sup_norm == 0.0

    def test_threads_and_sweep_are_deterministic(self, small_grid):
        spec = forced_heat()
        serial, _ = solve_nonlocal_linear(spec, small_grid)
        parallel, _ = solve_nonlocal_linear(spec, small_grid, SchemeConfig(threads=3, sweep="descending"))
        np.testing.assert_array_equal(serial.data, parallel.data)

    def test_local_family_matches_textbook_heat(self):
        spec = LinearSystemSpec.from_terms({"A.q11": "0.5", "g": "sin(y1) + cos(2 * y1)"})
        grid = build_grid(T=0.1, n_tau=16, L=2 * math.pi, n_y=16)
        u = solve_local_family(spec, grid)
        reference = heat_reference_stepper(np.sin(grid.y[0]) + np.cos(2 * grid.y[0]), 0.5, grid.dtau, grid.dy, 16)
        for j in range(17):
            np.testing.assert_allclose(u.slice(16, j)[:, 0], reference[j], rtol=0, atol=1e-13)

    def test_local_family_rejects_diagonal_terms(self, small_grid):
        with pytest.raises(InvalidParameter):
            solve_local_family(make_preset("nonlocal_heat_linear"), small_grid)

    def test_dimension_mismatch(self):
        grid = build_grid(T=0.1, n_tau=8, L=2 * math.pi, n_y=8, d=2)
        with pytest.raises(InvalidParameter):
            solve_nonlocal_linear(make_preset("nonlocal_heat_linear"), grid)


class TestStability:
    """CFL bookkeeping and the IMEX scheme."""

    def test_cfl_limit_formula(self):
        grid = build_grid(T=1, n_tau=8, L=2 * math.pi, n_y=16)
        assert cfl_limit(grid, 1.0, 1.0, 1.0) == pytest.approx(grid.dy ** 2 / 8)
        assert cfl_limit(grid, 0.0, 0.0) == float("inf")

    def test_violation(self):
        with pytest.raises(CflViolation):
            solve_nonlocal_linear(make_preset("nonlocal_heat_linear"), build_grid(T=1, n_tau=8, n_y=32))

    def test_reported_ratio(self, heat_grid):
        _, report = solve_nonlocal_linear(make_preset("nonlocal_heat_linear"), heat_grid)
        expected = heat_grid.dtau / cfl_limit(heat_grid, 1.0, 1.0, 0.9)
        assert report.cfl_ratio == pytest.approx(expected, rel=1e-12)
        assert report.cfl_ratio <= 1.0

    def test_imex_relaxes_the_step(self):
        spec = make_preset("nonlocal_heat_linear")
        grid = build_grid(T=1, n_tau=32, L=2 * math.pi, n_y=16)
        with pytest.raises(CflViolation):
            solve_nonlocal_linear(spec, grid)
        u, report = solve_nonlocal_linear(spec, grid, SchemeConfig(kind="imex"))
        assert report.scheme == "imex"
        assert u.all_finite()

    def test_imex_agrees_with_explicit(self, heat_grid):
        out = compare_schemes(make_preset("nonlocal_heat_linear"), heat_grid)
        assert out["passed"], out

    def test_imex_is_one_dimensional(self):
        grid = build_grid(T=0.1, n_tau=8, n_y=8, d=2)
        with pytest.raises(InvalidParameter):
            SchemeConfig(kind="imex").check(grid)

    @pytest.mark.parametrize("kwargs", [{"kind": "implicit"}, {"cfl_safety": 0.0}, {"cfl_safety": 1.5},
                                        {"sweep": "random"}, {"threads": 0}])
    def test_bad_scheme(self, kwargs):
        with pytest.raises(InvalidParameter):
            SchemeConfig(**kwargs)

    def test_cyclic_tridiagonal(self, rng):
        n = 12
        sub, sup = rng.uniform(-1, 0, n), rng.uniform(-1, 0, n)
        diag = 3.0 + rng.uniform(0, 1, n)
        rhs = rng.standard_normal(n)
        dense = np.diag(diag) + np.diag(sub[1:], -1) + np.diag(sup[:-1], 1)
        dense[0, -1] = sub[0]
        dense[-1, 0] = sup[-1]
        np.testing.assert_allclose(solve_cyclic_tridiagonal(sub, diag, sup, rhs), np.linalg.solve(dense, rhs),
                                   rtol=1e-12, atol=1e-12)


class TestSchauderRatio:
    """The a-priori estimate diagnostic."""

    @pytest.mark.parametrize("c", [-3.0, 0.5, 10.0])
    def test_homogeneous(self, small_grid, c):
        base = forced_heat("sin(y1) * (1 + s)", "(1 + t) * sin(y1)")
        scaled = forced_heat(f"{c} * sin(y1) * (1 + s)", f"{c} * (1 + t) * sin(y1)")
        u, _ = solve_nonlocal_linear(base, small_grid)
        v, _ = solve_nonlocal_linear(scaled, small_grid)
        assert schauder_ratio(v, scaled, 2.5) == pytest.approx(schauder_ratio(u, base, 2.5), rel=1e-12)

    def test_zero_data(self, small_grid):
        spec = forced_heat("0", "0")
        u, _ = solve_nonlocal_linear(spec, small_grid)
        assert schauder_ratio(u, spec, 2.5) == 0.0

    def test_positive_and_finite(self, heat_grid):
        spec = make_preset("nonlocal_heat_linear")
        u, _ = solve_nonlocal_linear(spec, heat_grid)
        value = schauder_ratio(u, spec, 2.5)
        assert 0.0 < value < 100.0
