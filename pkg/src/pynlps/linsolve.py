"""Marching solver for nonlocal linear systems on the triangle.

At s-level ``j`` every slice ``i >= j+1`` advances from ``j`` to ``j+1``::

    u[i][j+1] = u[i][j] + Δτ·(Σ A^I ∂_I u[i][j] + Σ B^I ∂_I u[j][j] + f)

The diagonal ``u[j][j]`` is read once per level from
:func:`~pynlps.grid.diagonal_slice` (fully lagged).  All slices of a level are
updated in one vectorized batch; with ``threads > 1`` the batch is split into
row chunks.  Writes are partitioned by ``i`` and reads touch only level ``j``,
so the result does not depend on sweep order or chunking.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import List, Optional, Tuple

import numpy as np

from .errors import CflViolation, InvalidParameter, NonFiniteDetected
from .grid import TriangleField, TriangleGrid, diagonal_slice, stencil_apply
from .holder import norm_triangle
from .systems.common import apply_matrix, matrix_norm
from .systems.linear import LinearSystemSpec

logger = logging.getLogger(__name__)


@dataclass
class SchemeConfig:
    """Time-stepping scheme.

    Attributes:
        kind: ``"explicit"`` (forward Euler in s) or ``"imex"`` (top-order local
            term implicit, d=1 and r=1 only).
        cfl_safety: safety factor in (0, 1].
        sweep: ``"ascending"`` or ``"descending"`` order of slices within a level.
        threads: number of worker threads per level (1 = serial).
    """

    kind: str = "explicit"
    cfl_safety: float = 0.9
    sweep: str = "ascending"
    threads: int = 1

    def __post_init__(self):
        where = "linsolve::SchemeConfig"
        if self.kind not in ("explicit", "imex"):
            raise InvalidParameter(f"scheme.kind must be 'explicit' or 'imex', got {self.kind!r}", where)
        if not 0 < self.cfl_safety <= 1:
            raise InvalidParameter(f"scheme.cfl_safety must be in (0, 1], got {self.cfl_safety!r}", where)
        if self.sweep not in ("ascending", "descending"):
            raise InvalidParameter(f"scheme.sweep must be 'ascending' or 'descending', got {self.sweep!r}", where)
        if int(self.threads) != self.threads or self.threads < 1:
            raise InvalidParameter(f"scheme.threads must be a positive integer, got {self.threads!r}", where)

    def check(self, grid: TriangleGrid) -> None:
        if self.kind == "imex" and (grid.d != 1 or grid.r != 1):
            raise InvalidParameter("imex scheme is available for d=1, r=1 only", "linsolve::SchemeConfig")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LinearSolveReport:
    scheme: str
    cfl_ratio: float
    wall_time: float
    sup_norm: float
    levels: int
    schauder_ratio: Optional[float] = None

    def to_dict(self) -> dict:
        return asdict(self)


def cfl_limit(grid: TriangleGrid, a_sup: float, b_sup: float, safety: float = 0.9) -> float:
    """Largest stable Δτ, ``safety·Δy^{2r} / (2^{2r}·d²·(sup‖A‖ + sup‖B‖))``."""
    total = a_sup + b_sup
    if total <= 0:
        return float("inf")
    return safety * grid.dy ** (2 * grid.r) / (2 ** (2 * grid.r) * grid.d ** 2 * total)


# ---------------------------------------------------------------------------
# Cyclic tridiagonal solves (IMEX)
# ---------------------------------------------------------------------------

def _thomas(sub: np.ndarray, diag: np.ndarray, sup: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    n = rhs.shape[-1]
    cp = np.empty_like(rhs)
    dp = np.empty_like(rhs)
    cp[..., 0] = sup[..., 0] / diag[..., 0]
    dp[..., 0] = rhs[..., 0] / diag[..., 0]
    for k in range(1, n):
        denom = diag[..., k] - sub[..., k] * cp[..., k - 1]
        cp[..., k] = sup[..., k] / denom
        dp[..., k] = (rhs[..., k] - sub[..., k] * dp[..., k - 1]) / denom
    x = np.empty_like(rhs)
    x[..., n - 1] = dp[..., n - 1]
    for k in range(n - 2, -1, -1):
        x[..., k] = dp[..., k] - cp[..., k] * x[..., k + 1]
    return x


def solve_cyclic_tridiagonal(sub: np.ndarray, diag: np.ndarray, sup: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve periodic tridiagonal systems along the last axis (Sherman-Morrison).

    Row ``k`` reads ``sub[k]·x[k-1] + diag[k]·x[k] + sup[k]·x[k+1] = rhs[k]`` with
    indices taken modulo ``n``.
    """
    n = rhs.shape[-1]
    gamma = -diag[..., 0]
    alpha = sup[..., n - 1]
    beta = sub[..., 0]
    bb = diag.copy()
    bb[..., 0] = diag[..., 0] - gamma
    bb[..., n - 1] = diag[..., n - 1] - alpha * beta / gamma
    x = _thomas(sub, bb, sup, rhs)
    u = np.zeros_like(rhs)
    u[..., 0] = gamma
    u[..., n - 1] = alpha
    z = _thomas(sub, bb, sup, u)
    fact = (x[..., 0] + beta * x[..., n - 1] / gamma) / (1.0 + z[..., 0] + beta * z[..., n - 1] / gamma)
    return x - fact[..., None] * z


def _implicit_step(values: np.ndarray, a_diag: np.ndarray, dtau: float, dy: float) -> np.ndarray:
    """Solve ``(1 - Δτ·a·D2) x = values`` per slice and component; arrays are ``(K, N, m)``."""
    c = dtau * a_diag / (dy * dy)
    c = np.moveaxis(np.broadcast_to(c, values.shape), -2, -1)
    rhs = np.moveaxis(values, -2, -1)
    x = solve_cyclic_tridiagonal(-c, 1.0 + 2.0 * c, -c, np.ascontiguousarray(rhs))
    return np.moveaxis(x, -1, -2)


# ---------------------------------------------------------------------------
# Marching
# ---------------------------------------------------------------------------

def _level_update(spec: LinearSystemSpec, grid: TriangleGrid, field: TriangleField, rows: np.ndarray, j: int,
                  a_terms, b_terms, diag_derivs, imex: bool):
    """New values at level ``j+1`` for *rows* plus the sampled CFL ratio."""
    top = 2 * grid.r
    block = grid.block(rows, j)
    U = field.data[grid.offsets(rows, j)]
    rhs = np.zeros_like(U)
    a_sup = 0.0
    b_sup = 0.0
    implicit = None
    for I, ev in a_terms:
        coef = ev(block)
        if len(I) == top:
            if imex:
                implicit = np.broadcast_to(coef, U.shape[:-1] + (grid.m, grid.m))
                a_diag = np.diagonal(implicit, axis1=-2, axis2=-1)
                off = implicit - a_diag[..., None] * np.eye(grid.m)
                if np.any(off):
                    rhs = rhs + apply_matrix(off, stencil_apply(U, I, grid))
                continue
            a_sup += float(np.max(matrix_norm(coef)))
        rhs = rhs + apply_matrix(coef, stencil_apply(U, I, grid))
    for I, ev in b_terms:
        coef = ev(block)
        if len(I) == top:
            b_sup += float(np.max(matrix_norm(coef)))
        rhs = rhs + apply_matrix(coef, diag_derivs[I])
    if not spec.f.is_zero:
        rhs = rhs + spec.f(block)
    new = U + grid.dtau * rhs
    if implicit is not None:
        new = _implicit_step(new, np.diagonal(implicit, axis1=-2, axis2=-1), grid.dtau, grid.dy)
    limit = cfl_limit(grid, a_sup, b_sup, 1.0)
    return rows, new, (grid.dtau / limit if np.isfinite(limit) else 0.0)


def march(spec: LinearSystemSpec, grid: TriangleGrid, scheme: Optional[SchemeConfig] = None,
          include_diagonal: bool = True, where: str = "linsolve::solve_nonlocal_linear") -> Tuple[TriangleField, LinearSolveReport]:
    """Shared recurrence of :func:`solve_nonlocal_linear` and :func:`solve_local_family`."""
    scheme = scheme or SchemeConfig()
    spec.require_valid(where)
    if (spec.d, spec.r, spec.m) != (grid.d, grid.r, grid.m):
        raise InvalidParameter(
            f"spec (d={spec.d}, r={spec.r}, m={spec.m}) does not match grid "
            f"(d={grid.d}, r={grid.r}, m={grid.m})", where)
    scheme.check(grid)
    imex = scheme.kind == "imex"
    start = time.perf_counter()
    n = grid.n_tau

    field = TriangleField(grid)
    initial = spec.g.sample(grid)
    field.data[grid.offsets(np.arange(n + 1), 0)] = initial
    bad = ~np.isfinite(initial).reshape(n + 1, -1).all(axis=1)
    if bad.any():
        raise NonFiniteDetected(int(np.argmax(bad)), 0, where)

    a_terms = [(I, ev) for I, ev in spec.A.items() if not ev.is_zero]
    b_terms = [(I, ev) for I, ev in spec.B.items() if not ev.is_zero] if include_diagonal else []
    worst = 0.0
    pool = ThreadPoolExecutor(max_workers=scheme.threads) if scheme.threads > 1 else None
    try:
        for j in range(n):
            rows = np.arange(j + 1, n + 1)
            if scheme.sweep == "descending":
                rows = rows[::-1]
            diag = diagonal_slice(field, j)
            diag_derivs = {I: stencil_apply(diag, I, grid) for I, _ in b_terms}
            chunks: List[np.ndarray] = [rows]
            if pool is not None and len(rows) > 1:
                chunks = [c for c in np.array_split(rows, min(scheme.threads, len(rows))) if len(c)]
            args = (spec, grid, field)
            tail = (j, a_terms, b_terms, diag_derivs, imex)
            if pool is not None and len(chunks) > 1:
                results = list(pool.map(lambda c: _level_update(*args, c, *tail), chunks))
            else:
                results = [_level_update(*args, c, *tail) for c in chunks]
            level_ratio = max(r[2] for r in results) / scheme.cfl_safety
            worst = max(worst, level_ratio)
            if level_ratio > 1.0:
                raise CflViolation(
                    f"Δτ={grid.dtau:.6g} exceeds the stability limit at level j={j} "
                    f"(ratio {level_ratio:.4g}, safety {scheme.cfl_safety})", where)
            for chunk_rows, new, _ in results:
                finite = np.isfinite(new).reshape(len(chunk_rows), -1).all(axis=1)
                if not finite.all():
                    offenders = np.sort(chunk_rows[~finite])
                    raise NonFiniteDetected(int(offenders[0]), j + 1, where)
                field.data[grid.offsets(chunk_rows, j + 1)] = new
            logger.debug("level %d done, cfl ratio %.4g", j, level_ratio)
    finally:
        if pool is not None:
            pool.shutdown()

    report = LinearSolveReport(
        scheme=scheme.kind,
        cfl_ratio=worst,
        wall_time=time.perf_counter() - start,
        sup_norm=field.sup_norm(),
        levels=n,
    )
    logger.info("%s: solved %s on n_tau=%d, n_y=%d in %.3fs", where, spec.name, n, grid.n_y, report.wall_time)
    return field, report


def solve_nonlocal_linear(spec: LinearSystemSpec, grid: TriangleGrid,
                          scheme: Optional[SchemeConfig] = None) -> Tuple[TriangleField, LinearSolveReport]:
    """Solve the nonlocal linear system on the triangle."""
    return march(spec, grid, scheme, True, "linsolve::solve_nonlocal_linear")


def solve_local_family(spec: LinearSystemSpec, grid: TriangleGrid,
                       scheme: Optional[SchemeConfig] = None) -> TriangleField:
    """Solve the family of local problems (all B zero), one per t-slice."""
    if not spec.b_is_zero:
        raise InvalidParameter("solve_local_family needs every B coefficient to be zero",
                               "linsolve::solve_local_family")
    field, _ = march(spec, grid, scheme, False, "linsolve::solve_local_family")
    return field


# ---------------------------------------------------------------------------
# Schauder diagnostics
# ---------------------------------------------------------------------------

def sample_source(spec: LinearSystemSpec, grid: TriangleGrid) -> TriangleField:
    """``f`` at every node of the triangle."""
    out = TriangleField(grid)
    for j in range(grid.n_tau + 1):
        rows = np.arange(j, grid.n_tau + 1)
        values = np.asarray(spec.f(grid.block(rows, j)), dtype=np.float64)
        out.data[grid.offsets(rows, j)] = np.broadcast_to(values, (len(rows), grid.n_spatial, grid.m))
    return out


def initial_extension(spec_g, grid: TriangleGrid) -> TriangleField:
    """``g(t_i, ·)`` copied to every ``s_j <= t_i``."""
    out = TriangleField(grid)
    sampled = spec_g.sample(grid)
    for i in range(grid.n_tau + 1):
        out.row(i)[:] = sampled[i]
    return out


def schauder_ratio(u: TriangleField, spec: LinearSystemSpec, l: float, with_t_derivative: bool = True) -> float:
    """``‖u‖^(l) / (‖f‖^(l-2r) + ‖g‖^(l))`` with the discrete norm estimators; 0 when both data norms vanish."""
    grid = u.grid
    norm_u = norm_triangle(u, l, with_t_derivative)
    norm_f = norm_triangle(sample_source(spec, grid), l - 2 * grid.r, with_t_derivative)
    norm_g = norm_triangle(initial_extension(spec.g, grid), l, with_t_derivative)
    denom = norm_f + norm_g
    if denom == 0.0:
        logger.info("schauder_ratio: data norms vanish, reporting 0")
        return 0.0
    return norm_u / denom
