"""
Tests for the packaged preset catalog.
"""
import pytest

from pynlps.data import (
    build_spec,
    get_preset_summary,
    list_presets,
    load_manufactured_solution,
    load_preset,
    make_preset,
    preset_frame,
    preset_grid,
    preset_lambda,
)
from pynlps.errors import InvalidParameter, UnknownPreset
from pynlps.systems import FullyNonlinearSpec, LinearSystemSpec, QuasilinearSystemSpec

PRESETS = [
    "nonlocal_heat_linear", "local_family", "heat_negative_B", "biharmonic_local", "coupled_heat_linear",
    "quasilinear_demo", "fullnl_exp", "fullnl_heat", "fullnl_exp_2d",
]


class TestCatalog:
    """Every preset builds a valid spec of its declared kind."""

    @pytest.mark.parametrize("name", PRESETS)
    def test_preset_builds(self, name):
        spec = make_preset(name)
        info = list_presets()[name]
        assert spec.isvalid()
        assert (spec.d, spec.r, spec.m) == (info["d"], info["r"], info["m"])
        expected = {"linear": LinearSystemSpec, "quasilinear": QuasilinearSystemSpec,
                    "fully_nonlinear": FullyNonlinearSpec}[info["kind"]]
        assert isinstance(spec, expected)

    def test_unknown_preset(self):
        with pytest.raises(UnknownPreset):
            make_preset("nonlocal_wave")

    def test_manufactured_solutions_are_not_presets(self):
        with pytest.raises(UnknownPreset):
            make_preset("heat_mms")
        assert "heat_mms" not in list_presets()
        assert "heat_mms" in list_presets(include_mms=True)

    def test_load_preset_returns_a_copy(self):
        entry = load_preset("nonlocal_heat_linear")
        entry["terms"]["A.q11"] = "5"
        assert load_preset("nonlocal_heat_linear")["terms"]["A.q11"] == "1"

    def test_grid_and_lambda(self):
        assert preset_grid("biharmonic_local") == {"T": 0.1, "n_tau": 128, "n_y": 16}
        assert preset_lambda("heat_negative_B") == 0.0
        assert preset_lambda("coupled_heat_linear") == 0.875

    def test_frame(self):
        frame = preset_frame()
        assert frame.index.name == "name"
        assert set(PRESETS) == set(frame.index)
        assert frame.loc["heat_negative_B", "negative_example"]
        assert frame.loc["coupled_heat_linear", "m"] == 2

    def test_summary(self, capsys):
        get_preset_summary()
        out = capsys.readouterr().out
        assert "nonlocal_heat_linear" in out
        assert "(negative example)" in out


class TestManufacturedLookup:
    """Manufactured solutions by name or through a preset."""

    def test_by_name(self):
        assert load_manufactured_solution("heat2d_mms").d == 2

    def test_preset_without_solution(self):
        with pytest.raises(UnknownPreset):
            load_manufactured_solution("heat_negative_B")

    def test_unknown(self):
        with pytest.raises(UnknownPreset):
            load_manufactured_solution("wave_mms")


class TestBuildSpec:
    """Inline problem definitions."""

    def test_inline_linear(self):
        spec = build_spec("linear", {"A.q11": "2", "g": "cos(y1)"}, name="inline")
        assert spec.name == "inline"
        assert spec.isvalid()

    def test_bad_kind(self):
        with pytest.raises(InvalidParameter):
            build_spec("hyperbolic", {"A.q11": "1"})

    def test_matrix_terms_need_components(self):
        with pytest.raises(InvalidParameter):
            build_spec("linear", {"A.q11": [[1.0]]})

    def test_components_only_for_linear(self):
        with pytest.raises(InvalidParameter):
            build_spec("quasilinear", {"A.q11": [[1.0, 0.0], [0.0, 1.0]]}, m=2)

    def test_matrix_shape_is_checked(self):
        with pytest.raises(InvalidParameter):
            build_spec("linear", {"A.q11": [[1.0, 0.0]], "g": ["0", "0"]}, m=2)

    def test_initial_data_needs_every_component(self):
        with pytest.raises(InvalidParameter):
            build_spec("linear", {"A.q11": [[1.0, 0.0], [0.0, 1.0]], "g": ["0"]}, m=2)
