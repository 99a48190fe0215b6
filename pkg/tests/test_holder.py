"""
Tests for the discrete Hölder seminorms and triangle norms.
"""
import math

import numpy as np
import pytest

from pynlps.errors import InvalidAlpha, InvalidParameter, InvalidRegularityIndex, UnsupportedRegularityIndex
from pynlps.grid import TriangleField, build_grid
from pynlps.holder import norm_parabolic, norm_triangle, pair_offsets, seminorm_s, seminorm_y


def brute_seminorm_y(values, alpha, grid):
    """Definition of the periodic y-seminorm over every pair, d = 1."""
    n, best = grid.n_y, 0.0
    for a in range(n):
        for b in range(n):
            if a == b:
                continue
            k = abs(a - b)
            dist = min(k, n - k) * grid.dy
            best = max(best, abs(values[a] - values[b]) / dist ** alpha)
    return best


class TestSeminormY:
    """Tests for the spatial seminorm."""

    def test_constant(self):
        grid = build_grid(T=1, n_tau=1, n_y=16)
        assert seminorm_y(np.full(16, 2.5), 0.5, grid) == 0.0

    def test_sine_exhaustive(self):
        grid = build_grid(T=1, n_tau=1, L=2 * math.pi, n_y=64)
        values = np.sin(grid.y[0])
        assert seminorm_y(values, 0.5, grid) == pytest.approx(brute_seminorm_y(values, 0.5, grid), rel=1e-12)

    def test_homogeneity(self):
        grid = build_grid(T=1, n_tau=1, L=2 * math.pi, n_y=32)
        values = np.sin(grid.y[0]) + 0.3 * np.cos(3 * grid.y[0])
        assert seminorm_y(-3 * values, 0.5, grid) == pytest.approx(3 * seminorm_y(values, 0.5, grid), rel=1e-12)

    def test_invalid_alpha(self):
        grid = build_grid(T=1, n_tau=1, n_y=16)
        for alpha in (0.0, 1.0, -0.2):
            with pytest.raises(InvalidAlpha):
                seminorm_y(np.zeros(16), alpha, grid)

    def test_subsample_calibration(self):
        grid = build_grid(T=1, n_tau=1, L=2 * math.pi, n_y=256)
        assert len(pair_offsets(grid)) < grid.n_spatial - 1
        values = np.sin(grid.y[0])
        full = seminorm_y(values, 0.5, grid, exhaustive=True)
        sampled = seminorm_y(values, 0.5, grid)
        assert 0.9 * full <= sampled <= full

    @pytest.mark.parametrize("n_y", [16, 32, 128])
    @pytest.mark.parametrize("axis", [0, 1])
    def test_subsample_calibration_two_dimensional(self, n_y, axis):
        grid = build_grid(T=1, n_tau=1, L=2 * math.pi, n_y=n_y, d=2)
        offsets = pair_offsets(grid)
        assert len(offsets) < grid.n_spatial - 1
        assert len(offsets) * grid.n_spatial >= 10_000
        values = np.sin(grid.y[axis])
        full = seminorm_y(values, 0.5, grid, exhaustive=True)
        sampled = seminorm_y(values, 0.5, grid)
        assert full > 1.0
        assert 0.9 * full <= sampled <= full

    def test_two_dimensional_unit_shifts(self):
        grid = build_grid(T=1, n_tau=1, L=2 * math.pi, n_y=128, d=2)
        offsets = set(pair_offsets(grid).tolist())
        assert {1, grid.n_y} <= offsets

    def test_two_dimensional_wraps(self):
        grid = build_grid(T=1, n_tau=1, L=1.0, n_y=8, d=2)
        values = np.zeros(grid.n_spatial)
        values[0] = 1.0
        # nearest neighbours at one step, including across the periodic edge
        assert seminorm_y(values, 0.5, grid) == pytest.approx(1.0 / grid.dy ** 0.5)


class TestSeminormS:
    """Tests for the temporal seminorm."""

    def test_constant_in_s(self):
        grid = build_grid(T=1, n_tau=8, n_y=16)
        slices = np.tile(np.sin(grid.y[0]), (9, 1))
        assert seminorm_s(slices, 0.5, grid.dtau) == 0.0

    def test_linear_in_s(self):
        grid = build_grid(T=1, n_tau=8, L=2 * math.pi, n_y=16)
        s = np.arange(9) * grid.dtau
        slices = s[:, None] * np.sin(grid.y[0])[None, :]
        expected = np.max(np.abs(np.sin(grid.y[0]))) * 1.0 ** 0.5
        assert seminorm_s(slices, 0.5, grid.dtau) == pytest.approx(expected, rel=1e-12)

    def test_homogeneity(self, rng):
        slices = rng.standard_normal((6, 10))
        assert seminorm_s(2 * slices, 0.3, 0.1) == pytest.approx(2 * seminorm_s(slices, 0.3, 0.1), rel=1e-12)


class TestNormParabolic:
    """Tests for the assembled per-slice norm."""

    def test_zero_field(self):
        field = TriangleField(build_grid(T=1, n_tau=4, n_y=16))
        report = norm_parabolic(field, 4, 2.5)
        assert report.total == 0.0
        assert all(v == 0.0 for v in report.sup_terms.values())
        assert report.seminorm_y == 0.0

    def test_s_independent_sine(self):
        grid = build_grid(T=1, n_tau=4, L=2 * math.pi, n_y=16)
        field = TriangleField.from_function(grid, lambda t, s, y: np.sin(y[0])[None, :] + 0 * t)
        report = norm_parabolic(field, 4, 0.5)
        expected_y = brute_seminorm_y(np.sin(grid.y[0]), 0.5, grid)
        assert report.sup_terms[(0, 0)] == pytest.approx(1.0)
        assert report.seminorm_y == pytest.approx(expected_y, rel=1e-12)
        assert report.seminorm_s[(0, 0, 0.25)] == 0.0
        assert report.total == pytest.approx(1.0 + expected_y, rel=1e-12)

    def test_total_is_sum_of_parts(self, sin_field):
        report = norm_parabolic(sin_field, 3, 2.5)
        parts = sum(report.sup_terms.values()) + report.seminorm_y + sum(report.seminorm_s.values())
        assert report.total == pytest.approx(parts, rel=1e-12)
        assert set(report.sup_terms) == {(0, 0), (0, 1), (0, 2), (1, 0)}

    def test_triangle_inequality(self, rng):
        grid = build_grid(T=1, n_tau=4, L=2 * math.pi, n_y=16)
        for _ in range(5):
            a, b, c = rng.standard_normal(3)
            phi = TriangleField.from_function(grid, lambda t, s, y: a * np.sin(y[0] + s) + 0 * t)
            psi = TriangleField.from_function(grid, lambda t, s, y: b * np.cos(2 * y[0]) * (1 + c * s) + 0 * t)
            both = TriangleField(grid, phi.data + psi.data)
            lhs = norm_parabolic(both, 4, 1.5).total
            rhs = norm_parabolic(phi, 4, 1.5).total + norm_parabolic(psi, 4, 1.5).total
            assert lhs <= rhs + 1e-10

    def test_regularity_index_errors(self, sin_field):
        with pytest.raises(InvalidRegularityIndex):
            norm_parabolic(sin_field, 2, 2.0)
        with pytest.raises(UnsupportedRegularityIndex):
            norm_parabolic(sin_field, 2, 3.5)

    def test_to_dict(self, sin_field):
        out = norm_parabolic(sin_field, 2, 2.5).to_dict()
        assert "0,2" in out["sup_terms"]
        assert out["l"] == 2.5
        assert out["alpha"] == pytest.approx(0.5)


class TestNormTriangle:
    """Tests for the triangle norms."""

    def test_zero_field(self):
        field = TriangleField(build_grid(T=1, n_tau=4, n_y=16))
        assert norm_triangle(field, 2.5) == 0.0
        assert norm_triangle(field, 2.5, with_t_derivative=True) == 0.0

    def test_t_times_sine(self):
        grid = build_grid(T=1, n_tau=4, L=2 * math.pi, n_y=16)
        field = TriangleField.from_function(grid, lambda t, s, y: t * np.sin(y[0])[None, :])
        semi = brute_seminorm_y(np.sin(grid.y[0]), 0.5, grid)
        assert norm_triangle(field, 0.5) == pytest.approx(1.0 + semi, rel=1e-12)
        assert norm_triangle(field, 0.5, with_t_derivative=True) == pytest.approx(2 * (1.0 + semi), rel=1e-10)

    def test_grows_with_t(self):
        grid = build_grid(T=1, n_tau=4, L=2 * math.pi, n_y=16)
        field = TriangleField.from_function(grid, lambda t, s, y: t * np.sin(y[0])[None, :])
        values = [norm_triangle(field, 0.5, upto=k) for k in range(5)]
        assert values == sorted(values)
        assert values[0] == 0.0

    def test_monotone_in_triangle_size(self, sin_field):
        for flag in (False, True):
            small = norm_triangle(sin_field, 1.5, flag, upto=2)
            full = norm_triangle(sin_field, 1.5, flag)
            assert small <= full

    def test_t_derivative_needs_two_steps(self):
        field = TriangleField(build_grid(T=1, n_tau=1, n_y=16))
        with pytest.raises(InvalidParameter):
            norm_triangle(field, 0.5, with_t_derivative=True)

    def test_components_are_summed(self, sin_field):
        doubled = TriangleField.stack([sin_field, sin_field])
        assert norm_triangle(doubled, 1.5) == pytest.approx(2 * norm_triangle(sin_field, 1.5), rel=1e-12)
