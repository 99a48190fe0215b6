"""Triangular space-time grid, field storage and periodic stencils.

Nodes are ``(t_i, s_j, y)`` with ``0 <= j <= i <= n_tau`` and ``y`` on the
periodic box ``[0, L)^d``.  A :class:`TriangleField` stores the lower triangle
row by row: slice ``(i, j)`` lives at offset ``i(i+1)/2 + j`` of an array of
shape ``(n_tri, n_y**d, m)``.  This is also the NLTF payload order.

Spatial slices carry arbitrary leading batch dimensions ``(*batch, N, m)`` so
a whole s-level of slices can be differentiated in one call.
"""
from __future__ import annotations

import itertools
import logging
import math
import re
from dataclasses import dataclass, field as dc_field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import IndexOutOfRange, InvalidParameter, UnsupportedOrder

logger = logging.getLogger(__name__)

MultiIndex = Tuple[int, ...]

_NAME_RE = re.compile(r"^(n?)(u|p\d|q\d\d|c\d{3,4})$")


# ---------------------------------------------------------------------------
# Multi-indices and their expression names
# ---------------------------------------------------------------------------

def multi_indices(d: int, max_order: int, min_order: int = 0) -> List[MultiIndex]:
    """All canonical (nondecreasing, 0-based) multi-indices, ordered by |I| then lexicographically."""
    out: List[MultiIndex] = []
    for k in range(min_order, max_order + 1):
        out.extend(itertools.combinations_with_replacement(range(d), k))
    return out


def index_name(I: MultiIndex, diagonal: bool = False) -> str:
    """Expression identifier of ``∂_I u``: ``u``, ``p1``, ``q12``, ``c111`` (``n``-prefixed on the diagonal)."""
    digits = "".join(str(a + 1) for a in I)
    if len(I) == 0:
        name = "u"
    elif len(I) == 1:
        name = "p" + digits
    elif len(I) == 2:
        name = "q" + digits
    else:
        name = "c" + digits
    if diagonal:
        return "n" if name == "u" else "n" + name
    return name


def parse_index_name(name: str) -> Optional[Tuple[MultiIndex, bool]]:
    """Inverse of :func:`index_name`; ``None`` for identifiers that are not jet entries."""
    if name == "n":
        return (), True
    m = _NAME_RE.match(name)
    if not m:
        return None
    diagonal = m.group(1) == "n"
    body = m.group(2)
    if body == "u":
        if diagonal:
            return None
        return (), False
    I = tuple(int(ch) - 1 for ch in body[1:])
    if body[0] == "c" and len(I) < 3:
        return None
    return I, diagonal


def is_canonical(I: Sequence[int]) -> bool:
    return all(I[k] <= I[k + 1] for k in range(len(I) - 1))


# ---------------------------------------------------------------------------
# Grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TriangleGrid:
    """Discretization of the triangle Δ[0,T] times the periodic box [0, L)^d."""

    T: float
    n_tau: int
    L: float
    n_y: int
    d: int = 1
    r: int = 1
    m: int = 1

    def __post_init__(self):
        where = "grid::build_grid"
        if not (isinstance(self.T, (int, float)) and math.isfinite(self.T) and self.T > 0):
            raise InvalidParameter(f"T must be a positive finite number, got {self.T!r}", where)
        if not (isinstance(self.L, (int, float)) and math.isfinite(self.L) and self.L > 0):
            raise InvalidParameter(f"L must be a positive finite number, got {self.L!r}", where)
        if int(self.n_tau) != self.n_tau or self.n_tau < 1:
            raise InvalidParameter(f"n_tau must be an integer >= 1, got {self.n_tau!r}", where)
        if self.d not in (1, 2):
            raise InvalidParameter(f"d must be 1 or 2, got {self.d!r}", where)
        if self.r not in (1, 2):
            raise InvalidParameter(f"r must be 1 or 2, got {self.r!r}", where)
        if int(self.m) != self.m or self.m < 1:
            raise InvalidParameter(f"m must be an integer >= 1, got {self.m!r}", where)
        width = 4 * self.r + 1
        if int(self.n_y) != self.n_y or self.n_y < width:
            raise InvalidParameter(
                f"n_y must be >= 4r+1 (stencil width {width} > {self.n_y})", where
            )

    # -- steps and sizes ----------------------------------------------------
    @property
    def dtau(self) -> float:
        return self.T / self.n_tau

    @property
    def dy(self) -> float:
        return self.L / self.n_y

    @property
    def n_spatial(self) -> int:
        return self.n_y ** self.d

    @property
    def n_tri(self) -> int:
        return (self.n_tau + 1) * (self.n_tau + 2) // 2

    @property
    def spatial_shape(self) -> Tuple[int, ...]:
        return (self.n_y,) * self.d

    @property
    def t_nodes(self) -> np.ndarray:
        return np.arange(self.n_tau + 1) * self.dtau

    @property
    def y(self) -> np.ndarray:
        """Spatial coordinates, shape ``(d, N)``, row-major over the axes."""
        axis = np.arange(self.n_y) * self.dy
        mesh = np.meshgrid(*([axis] * self.d), indexing="ij")
        return np.stack([g.reshape(-1) for g in mesh])

    # -- indexing -----------------------------------------------------------
    def offset(self, i: int, j: int) -> int:
        self.check_node(i, j)
        return i * (i + 1) // 2 + j

    def offsets(self, rows: np.ndarray, j: int) -> np.ndarray:
        rows = np.asarray(rows, dtype=np.int64)
        return rows * (rows + 1) // 2 + j

    def check_node(self, i: int, j: int, where: str = "grid::index") -> None:
        if not (0 <= j <= i <= self.n_tau):
            raise IndexOutOfRange(
                f"node (i={i}, j={j}) outside the triangle 0 <= j <= i <= {self.n_tau}", where
            )

    def block(self, rows: Union[int, Sequence[int], np.ndarray], j: int) -> "NodeBlock":
        """Nodes ``(t_i, s_j, y)`` for every ``i`` in *rows* at level *j*."""
        rows = np.atleast_1d(np.asarray(rows, dtype=np.int64))
        return NodeBlock(
            t=(rows * self.dtau)[:, None],
            s=j * self.dtau,
            y=self.y,
            rows=rows,
            j=j,
        )

    def truncated(self, n_tau: int) -> "TriangleGrid":
        """The sub-triangle ``i <= n_tau`` with the same steps."""
        if not 1 <= n_tau <= self.n_tau:
            raise InvalidParameter(f"window of {n_tau} steps outside 1..{self.n_tau}", "grid::truncated")
        return TriangleGrid(n_tau * self.dtau, n_tau, self.L, self.n_y, self.d, self.r, self.m)

    def with_components(self, m: int) -> "TriangleGrid":
        return TriangleGrid(self.T, self.n_tau, self.L, self.n_y, self.d, self.r, m)

    def same_lattice(self, other: "TriangleGrid") -> bool:
        return (
            self.n_tau == other.n_tau and self.n_y == other.n_y and self.d == other.d
            and math.isclose(self.T, other.T, rel_tol=0, abs_tol=1e-14 * max(1.0, self.T))
            and math.isclose(self.L, other.L, rel_tol=0, abs_tol=1e-14 * max(1.0, self.L))
        )

    def to_dict(self) -> Dict[str, float]:
        return {"T": self.T, "n_tau": self.n_tau, "L": self.L, "n_y": self.n_y,
                "d": self.d, "r": self.r, "m": self.m}


def build_grid(T: float, n_tau: int, L: float = 2 * math.pi, n_y: int = 32,
               d: int = 1, r: int = 1, m: int = 1) -> TriangleGrid:
    """Build a validated :class:`TriangleGrid`; raises InvalidParameter naming the violated bound."""
    grid = TriangleGrid(float(T), int(n_tau), float(L), int(n_y), int(d), int(r), int(m))
    logger.debug("built grid %s", grid.to_dict())
    return grid


@dataclass
class NodeBlock:
    """A batch of nodes sharing one s-level: ``t`` has shape ``(K, 1)``, ``y`` shape ``(d, N)``.

    ``rows``/``j`` are set for grid blocks and ``None`` for off-grid samples.
    ``s`` is a float or an array broadcastable against ``t``.
    """

    t: np.ndarray
    s: Union[float, np.ndarray]
    y: np.ndarray
    rows: Optional[np.ndarray] = None
    j: Optional[int] = None

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.t.shape[0], self.y.shape[1])

    def shifted(self, dt: float = 0.0, ds: float = 0.0, dy: Optional[Tuple[int, float]] = None) -> "NodeBlock":
        y = self.y
        if dy is not None:
            axis, h = dy
            y = y.copy()
            y[axis] = y[axis] + h
        return NodeBlock(t=self.t + dt, s=self.s + ds, y=y, rows=self.rows, j=self.j)


# ---------------------------------------------------------------------------
# Fields
# ---------------------------------------------------------------------------

class TriangleField:
    """m-component grid function on the triangle, lower-triangular storage."""

    def __init__(self, grid: TriangleGrid, data: Optional[np.ndarray] = None):
        self.grid = grid
        shape = (grid.n_tri, grid.n_spatial, grid.m)
        if data is None:
            data = np.zeros(shape)
        data = np.asarray(data, dtype=np.float64)
        if data.shape != shape:
            raise InvalidParameter(f"field data shape {data.shape} != {shape}", "grid::TriangleField")
        self.data = data

    @classmethod
    def zeros(cls, grid: TriangleGrid) -> "TriangleField":
        return cls(grid)

    @classmethod
    def from_function(cls, grid: TriangleGrid, fn) -> "TriangleField":
        """Sample ``fn(t, s, y) -> (K, N, m)`` (or broadcastable) at every node, one s-level at a time."""
        out = cls(grid)
        for j in range(grid.n_tau + 1):
            rows = np.arange(j, grid.n_tau + 1)
            block = grid.block(rows, j)
            values = np.asarray(fn(block.t, block.s, block.y), dtype=np.float64)
            if values.ndim == 2:
                values = values[..., None]
            out.data[grid.offsets(rows, j)] = np.broadcast_to(values, (len(rows), grid.n_spatial, grid.m))
        return out

    @classmethod
    def stack(cls, fields: Sequence["TriangleField"]) -> "TriangleField":
        """Concatenate fields along the component axis."""
        grid = fields[0].grid
        data = np.concatenate([f.data for f in fields], axis=-1)
        return cls(grid.with_components(data.shape[-1]), data)

    def component(self, a: int) -> "TriangleField":
        return TriangleField(self.grid.with_components(1), self.data[..., a:a + 1].copy())

    def copy(self) -> "TriangleField":
        return TriangleField(self.grid, self.data.copy())

    def slice(self, i: int, j: int) -> np.ndarray:
        self.grid.check_node(i, j, "grid::slice")
        return self.data[self.grid.offset(i, j)]

    def set_slice(self, i: int, j: int, values: np.ndarray) -> None:
        self.grid.check_node(i, j, "grid::set_slice")
        self.data[self.grid.offset(i, j)] = values

    def row(self, i: int) -> np.ndarray:
        """All slices ``(i, 0..i)`` as a view of shape ``(i+1, N, m)``."""
        self.grid.check_node(i, 0, "grid::row")
        start = i * (i + 1) // 2
        return self.data[start:start + i + 1]

    def restricted(self, n_tau: int) -> "TriangleField":
        """The field on the sub-triangle ``i <= n_tau``."""
        grid = self.grid.truncated(n_tau)
        return TriangleField(grid, self.data[:grid.n_tri].copy())

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.data))) if self.data.size else 0.0

    def all_finite(self) -> bool:
        return bool(np.isfinite(self.data).all())

    def __repr__(self) -> str:
        return f"TriangleField(grid={self.grid.to_dict()})"


def diagonal_slice(field: TriangleField, j: int) -> np.ndarray:
    """Stored values at ``(j, j)``; the single source of diagonal reads."""
    if not 0 <= j <= field.grid.n_tau:
        raise IndexOutOfRange(f"diagonal level j={j} outside 0..{field.grid.n_tau}", "grid::diagonal_slice")
    return field.data[j * (j + 1) // 2 + j]


# ---------------------------------------------------------------------------
# Stencils
# ---------------------------------------------------------------------------

def _first_difference(u: np.ndarray, axis: int, dy: float) -> np.ndarray:
    return (np.roll(u, -1, axis=axis) - np.roll(u, 1, axis=axis)) / (2.0 * dy)


def _second_difference(u: np.ndarray, axis: int, dy: float) -> np.ndarray:
    return (np.roll(u, -1, axis=axis) - 2.0 * u + np.roll(u, 1, axis=axis)) / (dy * dy)


def axis_counts(I: MultiIndex, d: int) -> List[int]:
    counts = [0] * d
    for a in I:
        counts[a] += 1
    return counts


def stencil_apply(values: np.ndarray, I: MultiIndex, grid: TriangleGrid) -> np.ndarray:
    """Central-difference approximation of ``∂_I`` on values of shape ``(*batch, N, m)``.

    Per axis the order-2 stencil is applied ``c // 2`` times and then the
    order-1 stencil ``c % 2`` times; axes are processed in ascending order.
    """
    I = tuple(sorted(I))
    if len(I) > 2 * grid.r + 1:
        raise UnsupportedOrder(f"|I|={len(I)} exceeds 2r+1={2 * grid.r + 1}", "grid::stencil_apply")
    if any(a < 0 or a >= grid.d for a in I):
        raise UnsupportedOrder(f"multi-index {I} refers to an axis outside d={grid.d}", "grid::stencil_apply")
    values = np.asarray(values, dtype=np.float64)
    if len(I) == 0:
        return values
    batch = values.shape[:-2]
    m = values.shape[-1]
    u = values.reshape(batch + grid.spatial_shape + (m,))
    nb = len(batch)
    for a, c in enumerate(axis_counts(I, grid.d)):
        axis = nb + a
        for _ in range(c // 2):
            u = _second_difference(u, axis, grid.dy)
        if c % 2:
            u = _first_difference(u, axis, grid.dy)
    return u.reshape(values.shape)


# ---------------------------------------------------------------------------
# Jets
# ---------------------------------------------------------------------------

@dataclass
class Jet:
    """Spatial derivatives up to ``order`` at the local ``(t,s,y)`` and diagonal ``(s,s,y)`` arguments."""

    order: int
    local: Dict[MultiIndex, np.ndarray]
    diagonal: Dict[MultiIndex, np.ndarray]
    d: int = 1

    def entries(self) -> List[Tuple[str, MultiIndex, bool]]:
        out = [(index_name(I), I, False) for I in self.local]
        out += [(index_name(I, True), I, True) for I in self.diagonal]
        return out

    def get(self, name: str) -> np.ndarray:
        parsed = parse_index_name(name)
        if parsed is None:
            raise KeyError(name)
        I, diag = parsed
        return (self.diagonal if diag else self.local)[I]

    def replaced(self, name: str, value: np.ndarray) -> "Jet":
        """A shallow copy with entry *name* replaced; local and diagonal maps stay distinct objects."""
        I, diag = parse_index_name(name)
        local = dict(self.local)
        diagonal = dict(self.diagonal)
        (diagonal if diag else local)[I] = value
        return Jet(self.order, local, diagonal, self.d)


def jet_from_values(local_values: np.ndarray, diagonal_values: np.ndarray, grid: TriangleGrid,
                    order: int, same: bool = False) -> Jet:
    """Differentiate a local batch and a diagonal slice up to *order*."""
    if order > 2 * grid.r:
        raise UnsupportedOrder(f"jet order {order} exceeds 2r={2 * grid.r}", "grid::jet_at")
    indices = multi_indices(grid.d, order)
    local = {I: stencil_apply(local_values, I, grid) for I in indices}
    diagonal = local if same else {I: stencil_apply(diagonal_values, I, grid) for I in indices}
    return Jet(order, local, diagonal, grid.d)


def jet_at(field: TriangleField, i: Union[int, Iterable[int], np.ndarray], j: int, order: int) -> Jet:
    """Jet of *field* at ``(i, j)``; *i* may be an array of rows for a whole s-level.

    For ``i == j`` the local and diagonal maps are the same object.
    """
    grid = field.grid
    diag = diagonal_slice(field, j)
    if np.ndim(i) == 0:
        i = int(i)
        grid.check_node(i, j, "grid::jet_at")
        if i == j:
            return jet_from_values(diag, diag, grid, order, same=True)
        return jet_from_values(field.data[grid.offset(i, j)], diag, grid, order)
    rows = np.asarray(i, dtype=np.int64)
    if rows.size and (rows.min() < j or rows.max() > grid.n_tau):
        raise IndexOutOfRange(f"rows outside {j}..{grid.n_tau}", "grid::jet_at")
    return jet_from_values(field.data[grid.offsets(rows, j)], diag, grid, order)
