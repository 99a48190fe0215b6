"""Discrete Hölder seminorms and the triangle norms ``[u]^(l)`` and ``‖u‖^(l)``.

Spatial pairs are enumerated as lattice offsets ``k``: the pair ``(y, y+k)``
has the periodic distance of ``k`` and every point ``y`` is paired with its
shift by ``np.roll``.  With ``N = n_y**d <= 128`` all ``N-1`` offsets are used.
Above that, the offsets ``1, 1+stride, 1+2*stride, ...`` (flat index into the
spatial lattice) are used with ``n_off = ceil(10**4 / N)`` and
``stride = max(1, (N-1) // n_off)``, giving at least ``10**4`` pairs.
For ``d = 2`` the subsample also holds shifts along each axis and both
lattice diagonals: per-axis steps ``k`` run over ``1, 1+a, 1+2a, ...`` with
``a = max(1, (n_y-1) // 32)``, so the unit shift of every direction is
always present.

s-derivatives are first-order differences: one-sided at the ends of a slice,
central inside.  Regularity indices ``l >= 2r+1`` would need second
s-derivatives and are refused.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field as dc_field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import InvalidAlpha, InvalidParameter, InvalidRegularityIndex, UnsupportedRegularityIndex
from .grid import TriangleField, TriangleGrid, multi_indices, stencil_apply

logger = logging.getLogger(__name__)

EXHAUSTIVE_LIMIT = 128
MIN_PAIRS = 10_000
AXIS_SHIFTS = 32


@dataclass
class HolderReport:
    """Components of the parabolic norm ``|φ|^(l)`` of one t-slice.

    ``sup_terms`` is keyed by ``(i, j)``: s-derivative order and spatial
    order.  ``seminorm_s`` is keyed by ``(i, j, exponent)``.
    """

    l: float
    alpha: float
    sup_terms: Dict[Tuple[int, int], float] = dc_field(default_factory=dict)
    seminorm_y: float = 0.0
    seminorm_s: Dict[Tuple[int, int, float], float] = dc_field(default_factory=dict)
    total: float = 0.0

    def assemble(self) -> "HolderReport":
        self.total = float(sum(self.sup_terms.values()) + self.seminorm_y + sum(self.seminorm_s.values()))
        return self

    def to_dict(self) -> dict:
        return {
            "l": self.l,
            "alpha": self.alpha,
            "sup_terms": {f"{i},{j}": v for (i, j), v in self.sup_terms.items()},
            "seminorm_y": self.seminorm_y,
            "seminorm_s": {f"{i},{j},{e:g}": v for (i, j, e), v in self.seminorm_s.items()},
            "total": self.total,
        }


def _check_alpha(alpha: float, where: str) -> None:
    if not (isinstance(alpha, (int, float)) and 0 < alpha < 1):
        raise InvalidAlpha(f"alpha must lie in (0, 1), got {alpha!r}", where)


def check_regularity_index(l: float, r: int, where: str = "holder::norm_parabolic") -> None:
    if not (isinstance(l, (int, float)) and math.isfinite(l)) or l <= 0 or abs(l - round(l)) < 1e-12:
        raise InvalidRegularityIndex(f"l must be positive and non-integer, got {l!r}", where)
    if l >= 2 * r + 1:
        raise UnsupportedRegularityIndex(
            f"l={l} >= 2r+1={2 * r + 1} needs second s-derivatives, which are not estimated", where)


# ---------------------------------------------------------------------------
# Pair enumeration
# ---------------------------------------------------------------------------

def _axis_shifts(n_y: int) -> np.ndarray:
    stride = max(1, (n_y - 1) // AXIS_SHIFTS)
    return np.union1d([1], np.arange(1, n_y, stride))


def pair_offsets(grid: TriangleGrid, exhaustive: Optional[bool] = None) -> np.ndarray:
    """Flat lattice offsets used for spatial pairs, see module docstring."""
    n = grid.n_spatial
    if exhaustive is None:
        exhaustive = n <= EXHAUSTIVE_LIMIT
    if exhaustive:
        return np.arange(1, n)
    n_off = math.ceil(MIN_PAIRS / n)
    stride = max(1, (n - 1) // n_off)
    flat = np.arange(1, n, stride)
    if grid.d == 1:
        return flat
    ks = _axis_shifts(grid.n_y)
    shifts = []
    for axis in range(grid.d):
        along = np.zeros((len(ks), grid.d), dtype=np.int64)
        along[:, axis] = ks
        shifts.append(along)
    for sign in (1, -1):
        shifts.append(np.stack([ks] + [(sign * ks) % grid.n_y] * (grid.d - 1), axis=1))
    lattice = np.concatenate(shifts)
    directed = np.ravel_multi_index(tuple(lattice.T), grid.spatial_shape)
    return np.union1d(flat, directed)


def _offset_geometry(grid: TriangleGrid, flat: int) -> Tuple[Tuple[int, ...], float]:
    shift = np.unravel_index(int(flat), grid.spatial_shape)
    dist2 = 0.0
    for k in shift:
        k = int(k)
        wrapped = min(k, grid.n_y - k) * grid.dy
        dist2 += wrapped * wrapped
    return tuple(int(k) for k in shift), math.sqrt(dist2)


def seminorm_y(slices: np.ndarray, alpha: float, grid: TriangleGrid, exhaustive: Optional[bool] = None) -> float:
    """Max over all leading entries of ``|φ(y) - φ(y')| / dist(y, y')^alpha``.

    *slices* has shape ``(*batch, N)`` or ``(*batch, N, m)``; components are
    treated like extra batch entries.
    """
    _check_alpha(alpha, "holder::seminorm_y")
    values = np.asarray(slices, dtype=np.float64)
    if values.ndim >= 2 and values.shape[-1] != grid.n_spatial:
        values = np.moveaxis(values, -1, 0)
    if values.shape[-1] != grid.n_spatial:
        raise InvalidParameter(f"expected a trailing spatial axis of {grid.n_spatial}, got {values.shape}",
                               "holder::seminorm_y")
    batch = values.shape[:-1]
    u = values.reshape(batch + grid.spatial_shape)
    axes = tuple(range(len(batch), len(batch) + grid.d))
    best = 0.0
    for flat in pair_offsets(grid, exhaustive):
        shift, dist = _offset_geometry(grid, flat)
        diff = np.abs(np.roll(u, shift, axis=axes) - u)
        if diff.size:
            best = max(best, float(diff.max()) / dist ** alpha)
    return best


def seminorm_s(slices: np.ndarray, alpha: float, ds: float) -> float:
    """Max over pairs of s-levels ``j != j'`` of ``|φ(s_j) - φ(s_j')| / |s_j - s_j'|^alpha`` (no wrap).

    *slices* has the s-levels on axis 0.
    """
    _check_alpha(alpha, "holder::seminorm_s")
    values = np.asarray(slices, dtype=np.float64)
    best = 0.0
    for k in range(1, values.shape[0]):
        diff = np.abs(values[k:] - values[:-k])
        if diff.size:
            best = max(best, float(diff.max()) / (k * ds) ** alpha)
    return best


# ---------------------------------------------------------------------------
# Norms
# ---------------------------------------------------------------------------

def s_derivative(row: np.ndarray, ds: float) -> np.ndarray:
    """First-order s-difference of a slice family; zero for a single level."""
    if row.shape[0] < 2:
        return np.zeros_like(row)
    return np.gradient(row, ds, axis=0, edge_order=1)


def _terms(l: float, r: int) -> Tuple[List[Tuple[int, int]], List[Tuple[int, int]], List[Tuple[int, int, float]]]:
    floor_l = math.floor(l)
    sups, tops, temporal = [], [], []
    for i in range(0, floor_l // (2 * r) + 2):
        for j in range(0, floor_l + 1):
            order = 2 * r * i + j
            if order <= floor_l:
                sups.append((i, j))
            if order == floor_l:
                tops.append((i, j))
            if 0 < l - order < 2 * r:
                temporal.append((i, j, (l - order) / (2 * r)))
    return sups, tops, temporal


def parabolic_report(row: np.ndarray, l: float, grid: TriangleGrid, exhaustive: Optional[bool] = None) -> HolderReport:
    """:class:`HolderReport` of one t-slice given as ``(J, N, m)`` values at ``s_0..s_{J-1}``."""
    check_regularity_index(l, grid.r)
    alpha = l - math.floor(l)
    row = np.asarray(row, dtype=np.float64)
    if row.ndim == 2:
        row = row[..., None]
    sups, tops, temporal = _terms(l, grid.r)
    by_s_order = {0: row}
    if any(i == 1 for i, _ in sups) or any(i == 1 for i, _, _ in temporal):
        by_s_order[1] = s_derivative(row, grid.dtau)

    cache: Dict[Tuple[int, tuple], np.ndarray] = {}

    def derivatives(i: int, j: int) -> List[np.ndarray]:
        out = []
        for I in multi_indices(grid.d, j, j):
            key = (i, I)
            if key not in cache:
                cache[key] = stencil_apply(by_s_order[i], I, grid)
            out.append(cache[key])
        return out

    report = HolderReport(l=l, alpha=alpha)
    for a in range(row.shape[-1]):
        for i, j in sups:
            value = max(float(np.max(np.abs(D[..., a]))) if D.size else 0.0 for D in derivatives(i, j))
            report.sup_terms[(i, j)] = report.sup_terms.get((i, j), 0.0) + value
        for i, j in tops:
            report.seminorm_y += max(seminorm_y(D[..., a], alpha, grid, exhaustive) for D in derivatives(i, j))
        for i, j, e in temporal:
            value = max(seminorm_s(D[..., a], e, grid.dtau) for D in derivatives(i, j))
            report.seminorm_s[(i, j, e)] = report.seminorm_s.get((i, j, e), 0.0) + value
    return report.assemble()


def norm_parabolic(field: TriangleField, i: int, l: float, exhaustive: Optional[bool] = None) -> HolderReport:
    """Parabolic norm ``|u(t_i, ·, ·)|^(l)`` over ``0 <= s <= t_i``."""
    field.grid.check_node(i, 0, "holder::norm_parabolic")
    return parabolic_report(field.row(i), l, field.grid, exhaustive)


def t_derivative(field: TriangleField) -> TriangleField:
    """``u_t`` by differences across slices.

    Backward in ``t`` below the diagonal, forward on the diagonal; ``(n, n)``
    copies ``(n, n-1)``.
    """
    grid = field.grid
    n = grid.n_tau
    if n < 2:
        raise InvalidParameter("t-derivative terms need n_tau >= 2", "holder::norm_triangle")
    out = TriangleField(grid)
    for i in range(n + 1):
        for j in range(i + 1):
            if j < i:
                value = (field.slice(i, j) - field.slice(i - 1, j)) / grid.dtau
            elif i < n:
                value = (field.slice(i + 1, i) - field.slice(i, i)) / grid.dtau
            else:
                value = out.slice(n, n - 1)
            out.set_slice(i, j, value)
    return out


def norm_triangle(field: TriangleField, l: float, with_t_derivative: bool = False,
                  upto: Optional[int] = None, exhaustive: Optional[bool] = None) -> float:
    """``[u]^(l)`` (flag off) or ``‖u‖^(l)`` (flag on) as the sup over t-slices ``i <= upto``.

    ``u_t`` is formed on the whole field before restricting, so the value is
    monotone in ``upto``.
    """
    grid = field.grid
    check_regularity_index(l, grid.r, "holder::norm_triangle")
    upto = grid.n_tau if upto is None else upto
    grid.check_node(upto, 0, "holder::norm_triangle")
    ut = t_derivative(field) if with_t_derivative else None
    best = 0.0
    for i in range(upto + 1):
        value = parabolic_report(field.row(i), l, grid, exhaustive).total
        if ut is not None:
            value += parabolic_report(ut.row(i), l, grid, exhaustive).total
        best = max(best, value)
    logger.debug("norm_triangle l=%g upto=%d flag=%s -> %.6g", l, upto, with_t_derivative, best)
    return best
