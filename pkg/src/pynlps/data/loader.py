"""
Preset problem catalog for pynlps.

Provides easy access to the packaged problems and their manufactured
solutions, in the spirit of toy datasets: every entry is a JSON file under
``pynlps/catalog``.
"""

import json
import logging
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Union

import numpy as np
import pandas as pd

from ..errors import InvalidParameter, UnknownPreset
from ..expr import as_expression, evaluate
from ..grid import parse_index_name
from ..systems import (
    CallableEvaluator,
    ConstantEvaluator,
    FullyNonlinearSpec,
    InitialData,
    LinearSystemSpec,
    QuasilinearSystemSpec,
)
from ..systems.common import jet_bindings

logger = logging.getLogger(__name__)

PROBLEM_KINDS = ("linear", "quasilinear", "fully_nonlinear")
MMS_KIND = "manufactured_solution"


def _get_catalog_path() -> Path:
    """Get the path to the catalog directory."""
    return Path(__file__).parent.parent / "catalog"


@lru_cache(maxsize=None)
def _catalog() -> Dict[str, dict]:
    entries = {}
    for path in sorted(_get_catalog_path().glob("*.json")):
        with open(path, "r", encoding="utf-8") as fh:
            entry = json.load(fh)
        entries[entry.get("name", path.stem)] = entry
    logger.info("loaded %d catalog entries from %s", len(entries), _get_catalog_path())
    return entries


def load_preset(name: str) -> dict:
    """The raw catalog entry of a preset problem (a copy)."""
    entry = _catalog().get(name)
    if entry is None or entry.get("kind") not in PROBLEM_KINDS:
        raise UnknownPreset(f"unknown preset '{name}'; available: {sorted(list_presets())}", "systems::make_preset")
    return json.loads(json.dumps(entry))


def make_preset(name: str, allow_fd: bool = True):
    """
    Build the spec of a catalog problem.

    Parameters:
        name (str): Preset name (e.g. ``"nonlocal_heat_linear"``, ``"fullnl_exp"``).
        allow_fd (bool): Let fully-nonlinear presets fall back to finite differences
            for derivatives the catalog does not supply.

    Returns:
        LinearSystemSpec | QuasilinearSystemSpec | FullyNonlinearSpec

    Examples:
        >>> from pynlps.data import make_preset
        >>> spec = make_preset("nonlocal_heat_linear")
        >>> spec.b_is_zero
        False
    """
    entry = load_preset(name)
    return build_spec(entry["kind"], entry["terms"], entry.get("d", 1), entry.get("r", 1), entry.get("m", 1),
                      name, allow_fd)


def build_spec(kind: str, terms: Mapping[str, object], d: int = 1, r: int = 1, m: int = 1,
               name: str = "problem", allow_fd: bool = True):
    """Spec from expression terms; ``m > 1`` is available for linear problems with matrix-valued terms."""
    where = "systems::make_preset"
    if kind not in PROBLEM_KINDS:
        raise InvalidParameter(f"problem kind must be one of {PROBLEM_KINDS}, got {kind!r}", where)
    if m > 1:
        if kind != "linear":
            raise InvalidParameter("multi-component problems are available for linear systems only", where)
        return _linear_system(terms, d, r, m, name)
    if any(isinstance(v, list) for v in terms.values()):
        raise InvalidParameter("matrix-valued terms need m > 1", where)
    if kind == "linear":
        return LinearSystemSpec.from_terms(terms, d, r, name)
    if kind == "quasilinear":
        return QuasilinearSystemSpec.from_terms(terms, d, r, name)
    return FullyNonlinearSpec.from_terms(terms, d, r, name, allow_fd)


def _matrix_evaluator(rows, m: int, label: str):
    entries = np.asarray(rows, dtype=object)
    if entries.shape != (m, m):
        raise InvalidParameter(f"'{label}' must be a {m}x{m} matrix", "systems::make_preset")
    if all(isinstance(v, (int, float)) for v in entries.ravel()):
        return ConstantEvaluator(np.asarray(rows, dtype=np.float64), m, "matrix", label)
    exprs = [[as_expression(v) for v in row] for row in rows]

    def fn(block, jet=None):
        out = np.zeros(block.shape + (m, m))
        b = jet_bindings(block)
        for a in range(m):
            for c in range(m):
                out[..., a, c] = evaluate(exprs[a][c], b)
        return out

    return CallableEvaluator(fn, m, "matrix", label, jet_dependent=False)


def _vector_callable(items: List[object]):
    exprs = [as_expression(v) for v in items]

    def fn(t, y):
        b = {"t": t}
        for k in range(y.shape[0]):
            b[f"y{k + 1}"] = y[k]
        pieces = [np.asarray(evaluate(e, b), dtype=np.float64) for e in exprs]
        shape = np.broadcast_shapes(*[p.shape for p in pieces])
        return np.stack([np.broadcast_to(p, shape) for p in pieces], axis=-1)

    return fn


def _linear_system(terms: Mapping[str, object], d: int, r: int, m: int, name: str) -> LinearSystemSpec:
    A, B = {}, {}
    f = None
    g = InitialData.constant(0.0, m)
    for key, value in terms.items():
        if key.startswith(("A.", "B.")):
            parsed = parse_index_name(key[2:])
            if parsed is None or parsed[1]:
                raise InvalidParameter(f"'{key}' does not name a local derivative", "systems::make_preset")
            (A if key[0] == "A" else B)[parsed[0]] = _matrix_evaluator(value, m, key)
        elif key == "f":
            fn = _vector_callable(value)
            f = CallableEvaluator(lambda block, jet=None: fn(block.t, block.y), m, "vector", "f",
                                  jet_dependent=False)
        elif key == "g":
            if not isinstance(value, list) or len(value) != m:
                raise InvalidParameter(f"'g' must list {m} expressions", "systems::make_preset")
            g = InitialData(_vector_callable(value), m, label="g")
        else:
            raise InvalidParameter(f"unsupported term '{key}' for a multi-component preset", "systems::make_preset")
    return LinearSystemSpec.from_coefficients(d, r, m, A, B, f, g, name)


def load_manufactured_solution(name: str):
    """
    Load a manufactured solution by its own name or by the name of a preset that points to one.

    Returns:
        ManufacturedSolution: already self-checked.
    """
    from ..verify import ManufacturedSolution

    entries = _catalog()
    entry = entries.get(name)
    if entry is not None and entry.get("kind") in PROBLEM_KINDS:
        if not entry.get("mms"):
            raise UnknownPreset(f"preset '{name}' has no manufactured solution", "verify::load_manufactured_solution")
        entry = entries.get(entry["mms"])
    if entry is None or entry.get("kind") != MMS_KIND:
        raise UnknownPreset(f"unknown manufactured solution '{name}'", "verify::load_manufactured_solution")
    return ManufacturedSolution(entry["terms"], entry.get("d", 1), entry["name"])


def list_presets(include_mms: bool = False) -> Dict[str, Dict[str, Union[int, str, None]]]:
    """
    List the catalog entries with basic information.

    Returns:
        Dict: name -> {kind, d, r, m, mms, description}

    Examples:
        >>> from pynlps.data import list_presets
        >>> for name, info in list_presets().items():
        ...     print(f"{name}: {info['kind']}, d={info['d']}")
    """
    out = {}
    for name, entry in _catalog().items():
        if entry.get("kind") == MMS_KIND and not include_mms:
            continue
        out[name] = {
            "kind": entry.get("kind"),
            "d": entry.get("d", 1),
            "r": entry.get("r", 1),
            "m": entry.get("m", 1),
            "mms": entry.get("mms"),
            "negative_example": entry.get("ellipticity", {}).get("negative_example", False),
            "description": entry.get("description", ""),
        }
    return out


def preset_frame(include_mms: bool = False) -> pd.DataFrame:
    """The catalog as a DataFrame indexed by name."""
    return pd.DataFrame.from_dict(list_presets(include_mms), orient="index").rename_axis("name")


def preset_grid(name: str) -> Dict[str, float]:
    """Default grid settings of a preset (may be empty)."""
    return dict(load_preset(name).get("grid", {}))


def preset_lambda(name: str) -> Optional[float]:
    """Documented ellipticity constant; ``None`` if the catalog does not pin one."""
    return load_preset(name).get("ellipticity", {}).get("lambda")


def get_preset_summary() -> None:
    """
    Print a summary of the preset catalog.

    Examples:
        >>> from pynlps.data import get_preset_summary
        >>> get_preset_summary()
    """
    presets = list_presets()
    print("pynlps preset catalog")
    print("=" * 72)
    for name, info in presets.items():
        flag = "  (negative example)" if info["negative_example"] else ""
        mms = info["mms"] or "-"
        print(f"{name:24} | {info['kind']:16} | d={info['d']} r={info['r']} m={info['m']} | mms={mms}{flag}")
    print("=" * 72)
    print(f"{'Total presets':24} | {len(presets)}")
    print()
    print("Usage examples:")
    print("  from pynlps.data import make_preset, load_manufactured_solution")
    print("  spec = make_preset('nonlocal_heat_linear')")
    print("  u_star = load_manufactured_solution('nonlocal_heat_linear')")
