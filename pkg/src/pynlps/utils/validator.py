"""Run-config validator based on the JSON model in ``pynlps/schemas``.

``RunConfigModel.json`` lists every section, its keys, their data types,
bounds, permissible values and defaults.  Validation collects every problem
instead of stopping at the first one; an empty list means success.

Usage
-----
>>> from pynlps.utils.validator import validate_config
>>> errors = validate_config({"problem": {"preset": "nonlocal_heat_linear"}, "schme": {}})
>>> errors[0]["key"]
'schme'
"""
from __future__ import annotations

import copy
import json
import math
import os
from typing import Any, Callable, Dict, List, Mapping, Optional

from ..errors import InputError

# ---------------------------------------------------------------------------
# Internal helpers
# ---------------------------------------------------------------------------

def _is_varchar(value: Any) -> bool:
    return isinstance(value, str)


def _is_integer(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _is_double(value: Any) -> bool:
    """Integers are accepted where floats are expected."""
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)


def _is_boolean(value: Any) -> bool:
    return isinstance(value, bool)


def _is_expressions(value: Any) -> bool:
    """A table of expression strings or numbers keyed by term name."""
    return isinstance(value, Mapping) and all(
        isinstance(k, str) and (isinstance(v, str) or _is_double(v)) for k, v in value.items()
    )


def _is_grid_list(value: Any) -> bool:
    """``[[n_y, n_tau], ...]`` pairs of positive integers."""
    return isinstance(value, list) and all(
        isinstance(p, (list, tuple)) and len(p) == 2 and all(_is_integer(x) and x > 0 for x in p) for p in value
    )


_DATATYPE_CHECKERS: Dict[str, Callable[[Any], bool]] = {
    "VARCHAR": _is_varchar,
    "INTEGER": _is_integer,
    "DOUBLE": _is_double,
    "BOOLEAN": _is_boolean,
    "LIST": lambda v: isinstance(v, list),
    "EXPRESSIONS": _is_expressions,
    "VARCHAR_OR_EXPRESSIONS": lambda v: _is_varchar(v) or _is_expressions(v),
    "GRID_LIST": _is_grid_list,
}


class ValidationError(InputError):
    """Exception raised when validation fails.

    The *errors* attribute contains a list describing validation issues.
    """

    def __init__(self, errors: List[Dict[str, Any]], where: str = "utils::validate_config"):
        summary = "; ".join(_describe(e) for e in errors[:5])
        more = f" (+{len(errors) - 5} more)" if len(errors) > 5 else ""
        super().__init__(f"validation failed: {summary}{more}", where)
        self.errors = errors


def _describe(error: Dict[str, Any]) -> str:
    key = error.get("key", "")
    if error["type"] == "unknown_key":
        return f"unknown key '{key}'"
    if error["type"] == "missing_section":
        return f"missing section '{key}'"
    if error["type"] == "datatype_mismatch":
        return f"'{key}' must be {error['expected']}"
    if error["type"] == "invalid_category":
        return f"'{key}' has invalid value(s) {error['values']}"
    if error["type"] == "out_of_range":
        return f"'{key}' = {error['value']} violates {error['bound']}"
    return f"{error['type']} at '{key}'"


# ---------------------------------------------------------------------------
# JSON spec utilities
# ---------------------------------------------------------------------------

_DEF_SPEC_DIR = os.path.join(os.path.dirname(__file__), os.pardir, "schemas")


def load_model(model_name: str = "RunConfig", spec_dir: Optional[str] = None) -> Dict[str, Any]:
    """Load and return the JSON model ``<model_name>Model.json``."""
    spec_dir = spec_dir or _DEF_SPEC_DIR
    path = os.path.join(spec_dir, f"{model_name}Model.json")
    if not os.path.exists(path):
        raise FileNotFoundError(f"config model not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# Public validation helpers
# ---------------------------------------------------------------------------

def _check_bounds(key: str, value: Any, key_spec: Mapping[str, Any]) -> List[Dict[str, Any]]:
    errors = []
    bounds = (
        ("min", lambda v, b: v >= b, ">="),
        ("max", lambda v, b: v <= b, "<="),
        ("exclusive_min", lambda v, b: v > b, ">"),
        ("exclusive_max", lambda v, b: v < b, "<"),
    )
    for name, ok, symbol in bounds:
        if name in key_spec and not ok(value, key_spec[name]):
            errors.append({"type": "out_of_range", "key": key, "value": value, "bound": f"{symbol} {key_spec[name]}"})
    return errors


def validate_config(config: Mapping[str, Any], model: Optional[Mapping[str, Any]] = None) -> List[Dict[str, Any]]:
    """Validate *config* against *model* (the packaged run-config model by default).

    Returns a list of error dictionaries, each naming the dotted ``key``.
    """
    model = model or load_model()
    errors: List[Dict[str, Any]] = []
    if not isinstance(config, Mapping):
        return [{"type": "datatype_mismatch", "key": "", "expected": "MAPPING"}]
    sections = {s["name"]: s for s in model["sections"]}

    # 1. Sections ---------------------------------------------------------------
    for name in config:
        if name not in sections:
            errors.append({"type": "unknown_key", "key": str(name)})
    for name, section in sections.items():
        if section.get("required") and name not in config:
            errors.append({"type": "missing_section", "key": name})

    # 2. Per-key checks ---------------------------------------------------------
    for name, section in sections.items():
        body = config.get(name)
        if body is None:
            continue
        if not isinstance(body, Mapping):
            errors.append({"type": "datatype_mismatch", "key": name, "expected": "MAPPING"})
            continue
        keys = {k["name"]: k for k in section["keys"]}
        for key, value in body.items():
            dotted = f"{name}.{key}"
            key_spec = keys.get(key)
            if key_spec is None:
                errors.append({"type": "unknown_key", "key": dotted})
                continue
            expected = key_spec["data_type"]
            if not _DATATYPE_CHECKERS[expected](value):
                errors.append({"type": "datatype_mismatch", "key": dotted, "expected": expected})
                continue
            allowed = key_spec.get("permissible_values")
            if allowed is not None:
                values = value if isinstance(value, list) else [value]
                bad = [v for v in values if v not in allowed]
                if bad:
                    errors.append({"type": "invalid_category", "key": dotted, "values": bad})
            if expected in ("INTEGER", "DOUBLE"):
                errors.extend(_check_bounds(dotted, value, key_spec))
    return errors


def apply_defaults(config: Mapping[str, Any], model: Optional[Mapping[str, Any]] = None) -> Dict[str, Any]:
    """A deep copy of *config* with every missing defaulted key filled in."""
    model = model or load_model()
    out = copy.deepcopy(dict(config))
    for section in model["sections"]:
        body = out.setdefault(section["name"], {})
        for key_spec in section["keys"]:
            if "default" in key_spec and key_spec["name"] not in body:
                body[key_spec["name"]] = copy.deepcopy(key_spec["default"])
    return out


def require_valid_config(config: Mapping[str, Any], model: Optional[Mapping[str, Any]] = None) -> Dict[str, Any]:
    """Validate, raise :class:`ValidationError` on problems, return the config with defaults."""
    errors = validate_config(config, model)
    if errors:
        raise ValidationError(errors)
    return apply_defaults(config, model)


def parse_override(text: str) -> tuple:
    """``a.b=value`` to ``("a.b", value)``; the value is JSON when it parses, a string otherwise."""
    if "=" not in text:
        raise ValidationError([{"type": "malformed_override", "key": text}], "cli::run")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def apply_override(config: Dict[str, Any], key: str, value: Any) -> Dict[str, Any]:
    """Set the dotted *key* in *config* in place, creating intermediate tables.

    At most three levels are split so term names keep their dots
    (``problem.terms.A.q11``).
    """
    parts = key.split(".", 2)
    node = config
    for part in parts[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ValidationError([{"type": "datatype_mismatch", "key": key, "expected": "MAPPING"}], "cli::run")
        node = child
    node[parts[-1]] = value
    return config
