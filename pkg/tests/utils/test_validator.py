import json

import pytest

from pynlps.errors import InputError
from pynlps.utils.validator import (
    _DATATYPE_CHECKERS,
    ValidationError,
    apply_defaults,
    apply_override,
    load_model,
    parse_override,
    require_valid_config,
    validate_config,
)


class TestDatatypeCheckers:
    """Tests for the internal datatype checker functions."""

    def test_integer_excludes_bool(self):
        assert _DATATYPE_CHECKERS["INTEGER"](3)
        assert not _DATATYPE_CHECKERS["INTEGER"](True)
        assert not _DATATYPE_CHECKERS["INTEGER"](3.0)

    def test_double_accepts_integers(self):
        assert _DATATYPE_CHECKERS["DOUBLE"](1)
        assert _DATATYPE_CHECKERS["DOUBLE"](0.5)
        assert not _DATATYPE_CHECKERS["DOUBLE"](float("nan"))
        assert not _DATATYPE_CHECKERS["DOUBLE"]("0.5")

    def test_expressions(self):
        assert _DATATYPE_CHECKERS["EXPRESSIONS"]({"A.q11": "1", "B.q11": 0.5})
        assert not _DATATYPE_CHECKERS["EXPRESSIONS"]({"A.q11": [1, 2]})
        assert _DATATYPE_CHECKERS["VARCHAR_OR_EXPRESSIONS"]("heat_mms")

    def test_grid_list(self):
        assert _DATATYPE_CHECKERS["GRID_LIST"]([[8, 16], [16, 64]])
        assert not _DATATYPE_CHECKERS["GRID_LIST"]([[8, 16, 1]])
        assert not _DATATYPE_CHECKERS["GRID_LIST"]([[0, 16]])


class TestValidateConfig:
    """Tests for validate_config."""

    def test_example_configs_are_valid(self, config_dir):
        for name in ("heat.json", "fullnl_exp.json", "heat_mms_wrong.json"):
            with open(f"{config_dir}/{name}", "r", encoding="utf-8") as fh:
                assert validate_config(json.load(fh)) == [], name

    def test_unknown_section(self):
        errors = validate_config({"problem": {"preset": "nonlocal_heat_linear"}, "schme": {}})
        assert errors == [{"type": "unknown_key", "key": "schme"}]

    def test_unknown_key(self):
        errors = validate_config({"problem": {"preset": "x"}, "scheme": {"knd": "imex"}})
        assert errors == [{"type": "unknown_key", "key": "scheme.knd"}]

    def test_missing_problem(self):
        errors = validate_config({"grid": {"n_y": 16}})
        assert {"type": "missing_section", "key": "problem"} in errors

    def test_datatype_mismatch(self):
        errors = validate_config({"problem": {"preset": "x"}, "grid": {"n_tau": "64"}})
        assert errors[0]["type"] == "datatype_mismatch"
        assert errors[0]["expected"] == "INTEGER"

    def test_invalid_category(self):
        errors = validate_config({"problem": {"preset": "x"}, "output": {"formats": ["nltf", "hdf5"]}})
        assert errors == [{"type": "invalid_category", "key": "output.formats", "values": ["hdf5"]}]

    @pytest.mark.parametrize("section,key,value", [
        ("grid", "T", 0.0), ("grid", "n_y", 4), ("scheme", "cfl_safety", 1.5),
        ("fixedpoint", "target_ratio", 1.0), ("verify", "R0", -1.0),
    ])
    def test_out_of_range(self, section, key, value):
        errors = validate_config({"problem": {"preset": "x"}, section: {key: value}})
        assert len(errors) == 1
        assert errors[0]["type"] == "out_of_range"
        assert errors[0]["key"] == f"{section}.{key}"

    def test_collects_every_problem(self):
        errors = validate_config({"problem": {"kind": "wave"}, "grid": {"n_tau": 0, "d": 3}, "extra": 1})
        assert {e["key"] for e in errors} == {"extra", "problem.kind", "grid.n_tau", "grid.d"}

    def test_section_must_be_a_table(self):
        errors = validate_config({"problem": "nonlocal_heat_linear"})
        assert errors[0]["type"] == "datatype_mismatch"


class TestDefaults:
    """Tests for defaults and overrides."""

    def test_apply_defaults(self):
        config = {"problem": {"preset": "nonlocal_heat_linear"}, "scheme": {"kind": "imex"}}
        out = apply_defaults(config)
        assert out["scheme"]["kind"] == "imex"
        assert out["scheme"]["cfl_safety"] == 0.9
        assert out["verify"]["tol_factor"] == 50.0
        assert out["output"]["formats"] == ["nltf", "json"]
        assert "scheme" in config and "verify" not in config

    def test_require_valid_config(self):
        with pytest.raises(ValidationError) as exc:
            require_valid_config({"problem": {"preset": "x"}, "schme": {}})
        assert isinstance(exc.value, InputError)
        assert exc.value.exit_code == 1
        assert "schme" in str(exc.value)
        assert exc.value.errors[0]["key"] == "schme"

    def test_parse_override(self):
        assert parse_override("grid.n_y=32") == ("grid.n_y", 32)
        assert parse_override("output.dir=out/x") == ("output.dir", "out/x")
        assert parse_override('output.formats=["csv"]') == ("output.formats", ["csv"])
        with pytest.raises(ValidationError):
            parse_override("grid.n_y")

    def test_apply_override_keeps_term_names(self):
        config = {"problem": {"kind": "linear"}}
        apply_override(config, "problem.terms.A.q11", "2")
        assert config["problem"]["terms"] == {"A.q11": "2"}

    def test_apply_override_into_scalar(self):
        with pytest.raises(ValidationError):
            apply_override({"problem": "heat"}, "problem.preset", "x")

    def test_model_sections(self):
        names = [s["name"] for s in load_model()["sections"]]
        assert names == ["problem", "grid", "scheme", "fixedpoint", "norms", "verify", "output"]
