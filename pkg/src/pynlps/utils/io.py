"""Artifact input/output: NLTF fields, JSON sidecars and reports, CSV and parquet slices."""
from __future__ import annotations

import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import pandas as pd

from ..errors import InvalidParameter, NltfFormatError
from ..grid import TriangleField, TriangleGrid

logger = logging.getLogger(__name__)

MAGIC = b"NLTF"
VERSION = 1
HEADER_FIELDS = ("n_tau", "d", "n_y", "r", "m")
HEADER_BYTES = len(MAGIC) + 1 + 8 * len(HEADER_FIELDS)
FLOAT_FORMAT = "%.17g"

PathLike = Union[str, os.PathLike]


def _meta_path(path: PathLike) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def _to_builtin(value: Any) -> Any:
    """JSON fallback for numpy scalars/arrays and tuples used as keys elsewhere."""
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def write_json(payload: Dict[str, Any], path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_to_builtin, allow_nan=True)
        fh.write("\n")
    return path


def read_json(path: PathLike) -> Dict[str, Any]:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def read_config(path: PathLike) -> Dict[str, Any]:
    """Read a run config; ``.toml`` files use :mod:`tomllib`, anything else is JSON."""
    path = Path(path)
    if not path.exists():
        raise InvalidParameter(f"config file {path} does not exist", "cli::run")
    try:
        if path.suffix.lower() == ".toml":
            try:
                import tomllib
            except ImportError:  # Python < 3.11
                import tomli as tomllib
            with open(path, "rb") as fh:
                return tomllib.load(fh)
        return read_json(path)
    except (ValueError, UnicodeDecodeError) as exc:
        raise InvalidParameter(f"cannot parse {path.name}: {exc}", "cli::run") from exc


def write_report(report: Dict[str, Any], directory: PathLike, name: str = "report") -> Path:
    """Write ``<directory>/<name>.json``."""
    path = write_json(report, Path(directory) / f"{name}.json")
    logger.info("wrote report %s", path)
    return path


# ---------------------------------------------------------------------------
# NLTF
# ---------------------------------------------------------------------------

def encode_nltf(field: TriangleField) -> bytes:
    """Bytes of the NLTF encoding of *field*.

    Layout: ``b"NLTF"``, version byte ``0x01``, then ``n_tau, d, n_y, r, m`` as
    little-endian u64, then the values as little-endian f64 ordered by ``i``
    ascending, ``j = 0..i``, spatial index (row-major per axis), component.
    """
    grid = field.grid
    header = np.array([grid.n_tau, grid.d, grid.n_y, grid.r, grid.m], dtype="<u8")
    return MAGIC + bytes([VERSION]) + header.tobytes() + field.data.astype("<f8", copy=False).tobytes()


def decode_nltf(payload: bytes, T: float, L: float) -> TriangleField:
    """Inverse of :func:`encode_nltf`; ``T`` and ``L`` come from the sidecar."""
    where = "utils::read_nltf"
    if len(payload) < HEADER_BYTES:
        raise NltfFormatError(f"truncated header ({len(payload)} bytes)", where)
    if payload[:4] != MAGIC:
        raise NltfFormatError(f"bad magic {payload[:4]!r}", where)
    if payload[4] != VERSION:
        raise NltfFormatError(f"unsupported version {payload[4]}", where)
    header = np.frombuffer(payload, dtype="<u8", count=len(HEADER_FIELDS), offset=5)
    n_tau, d, n_y, r, m = (int(v) for v in header)
    try:
        grid = TriangleGrid(float(T), n_tau, float(L), n_y, d, r, m)
    except InvalidParameter as exc:
        raise NltfFormatError(f"header describes an invalid grid: {exc.message}", where) from exc
    expected = grid.n_tri * grid.n_spatial * grid.m * 8
    body = payload[HEADER_BYTES:]
    if len(body) != expected:
        raise NltfFormatError(f"payload has {len(body)} bytes, header implies {expected}", where)
    data = np.frombuffer(body, dtype="<f8").astype(np.float64).reshape(grid.n_tri, grid.n_spatial, grid.m)
    return TriangleField(grid, data)


def write_nltf(field: TriangleField, path: PathLike, problem: Optional[str] = None,
               extra: Optional[Dict[str, Any]] = None) -> Path:
    """Write *field* to *path* and its ``<stem>.meta.json`` sidecar (T, L, problem id)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_nltf(field))
    meta = {"T": field.grid.T, "L": field.grid.L, "problem": problem, "format": "NLTF", "version": VERSION}
    meta.update({k: field.grid.to_dict()[k] for k in HEADER_FIELDS})
    if extra:
        meta.update(extra)
    write_json(meta, _meta_path(path))
    logger.info("wrote %s (%d nodes)", path, field.grid.n_tri * field.grid.n_spatial)
    return path


def read_nltf(path: PathLike, T: Optional[float] = None, L: Optional[float] = None) -> Tuple[TriangleField, Dict]:
    """Read an NLTF file; ``T``/``L`` default to the sidecar values.

    Returns:
        (TriangleField, dict): the field and the sidecar metadata (empty if absent).
    """
    path = Path(path)
    if not path.exists():
        raise NltfFormatError(f"{path} does not exist", "utils::read_nltf")
    meta: Dict[str, Any] = {}
    sidecar = _meta_path(path)
    if sidecar.exists():
        meta = read_json(sidecar)
    T = T if T is not None else meta.get("T")
    L = L if L is not None else meta.get("L")
    if T is None or L is None:
        raise NltfFormatError(f"T and L are unknown: no sidecar {sidecar.name} and none given", "utils::read_nltf")
    return decode_nltf(path.read_bytes(), T, L), meta


# ---------------------------------------------------------------------------
# Tabular slices
# ---------------------------------------------------------------------------

def _component_names(m: int) -> list:
    return ["u"] if m == 1 else [f"u{a + 1}" for a in range(m)]


def slice_frame(field: TriangleField, i: int) -> pd.DataFrame:
    """All values of the t-slice ``i``: columns ``s``, ``y1..yd`` and the components."""
    grid = field.grid
    grid.check_node(i, 0, "utils::slice_frame")
    row = field.row(i)
    N = grid.n_spatial
    frame = {"s": np.repeat(np.arange(i + 1) * grid.dtau, N)}
    for k in range(grid.d):
        frame[f"y{k + 1}"] = np.tile(grid.y[k], i + 1)
    values = row.reshape(-1, grid.m)
    for a, name in enumerate(_component_names(grid.m)):
        frame[name] = values[:, a]
    return pd.DataFrame(frame)


def field_frame(field: TriangleField) -> pd.DataFrame:
    """Long table of every node with ``i``, ``j``, ``t`` columns in front."""
    grid = field.grid
    pieces = []
    for i in range(grid.n_tau + 1):
        df = slice_frame(field, i)
        df.insert(0, "j", np.repeat(np.arange(i + 1), grid.n_spatial))
        df.insert(0, "t", i * grid.dtau)
        df.insert(0, "i", i)
        pieces.append(df)
    return pd.concat(pieces, ignore_index=True)


def write_slices_csv(field: TriangleField, directory: PathLike, prefix: str = "t") -> Path:
    """One CSV per t-slice under ``<directory>/slices``; 17 significant digits, ``\\n`` line endings."""
    out = Path(directory) / "slices"
    out.mkdir(parents=True, exist_ok=True)
    width = len(str(field.grid.n_tau))
    for i in range(field.grid.n_tau + 1):
        slice_frame(field, i).to_csv(out / f"{prefix}_{i:0{width}d}.csv", index=False,
                                     float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info("wrote %d CSV slices to %s", field.grid.n_tau + 1, out)
    return out


def write_parquet(field: TriangleField, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    field_frame(field).to_parquet(path, engine="pyarrow", index=False)
    logger.info("wrote %s", path)
    return path


def read_parquet(path: PathLike, grid: TriangleGrid) -> TriangleField:
    """Rebuild a field written by :func:`write_parquet` on a known grid."""
    df = pd.read_parquet(path, engine="pyarrow")
    names = _component_names(grid.m)
    missing = [c for c in ["i", "j"] + names if c not in df.columns]
    if missing:
        raise NltfFormatError(f"parquet table lacks columns {missing}", "utils::read_parquet")
    if len(df) != grid.n_tri * grid.n_spatial:
        raise NltfFormatError(f"parquet table has {len(df)} rows, grid needs {grid.n_tri * grid.n_spatial}",
                              "utils::read_parquet")
    df = df.sort_values(["i", "j"], kind="stable")
    data = df[names].to_numpy(dtype=np.float64).reshape(grid.n_tri, grid.n_spatial, grid.m)
    return TriangleField(grid, data)
