"""Fixed-point iterations for quasilinear and fully-nonlinear systems.

Two maps are iterated from ``u_0(t, s, ·) = g(t, ·)``:

* ``gamma_map`` freezes the coefficients of a quasilinear spec on the jet of
  the current iterate (at ``(t,s,y)`` and ``(s,s,y)``) and solves the
  resulting nonlocal linear system.
* ``temporal_N ∘ temporal_M`` solves the linear systems satisfied by
  ``w1 = u_s`` and ``w2 = u_t`` with coefficients frozen on the iterate, and
  integrates ``w1`` in ``s``.

Iteration stops once ``‖u_{k+1} - u_k‖_∞ <= tol``.  Three consecutive ratios
above ``target_ratio``, ``max_iter`` iterations or a ball exit shrink the
window ``[0, δ]`` by ``shrink``.  A window shorter than ``min_window_steps``
steps is an error.
"""
from __future__ import annotations

import logging
import math
import threading
import time
from dataclasses import asdict, dataclass, field as dc_field
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
from tqdm import tqdm

from .errors import BallExit, GridMismatch, InvalidParameter, MaxIterExceeded, UnsupportedMultiComponent
from .grid import (
    Jet,
    NodeBlock,
    TriangleField,
    TriangleGrid,
    diagonal_slice,
    index_name,
    jet_at,
    multi_indices,
    stencil_apply,
)
from .linsolve import SchemeConfig, initial_extension, solve_local_family, solve_nonlocal_linear
from .systems.common import CallableEvaluator, Evaluator, InitialData, apply_matrix, zero_matrix, zero_vector
from .systems.fully_nonlinear import FullyNonlinearSpec
from .systems.linear import LinearSystemSpec
from .systems.quasilinear import QuasilinearSystemSpec

logger = logging.getLogger(__name__)


@dataclass
class FixedPointConfig:
    """Stopping, window and ball settings of the fixed-point drivers."""

    tol: float = 1e-8
    max_iter: int = 50
    target_ratio: float = 0.5
    shrink: float = 0.5
    min_window_steps: int = 4
    persistent: int = 3
    ball_radius: Optional[float] = None
    alpha: float = 0.5
    higher_regularity: bool = False
    certify: bool = True
    show_progress: bool = False

    def __post_init__(self):
        where = "fixedpoint::FixedPointConfig"
        if not self.tol > 0:
            raise InvalidParameter(f"tol must be positive, got {self.tol!r}", where)
        if not 0 < self.target_ratio < 1:
            raise InvalidParameter(f"target_ratio must lie in (0, 1), got {self.target_ratio!r}", where)
        if not 0 < self.shrink < 1:
            raise InvalidParameter(f"shrink must lie in (0, 1), got {self.shrink!r}", where)
        if self.max_iter < 1 or self.min_window_steps < 1 or self.persistent < 1:
            raise InvalidParameter("max_iter, min_window_steps and persistent must be >= 1", where)
        if self.ball_radius is not None and not self.ball_radius > 0:
            raise InvalidParameter(f"ball_radius must be positive, got {self.ball_radius!r}", where)
        if not 0 < self.alpha < 1:
            raise InvalidParameter(f"alpha must lie in (0, 1), got {self.alpha!r}", where)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SolveReport:
    route: str
    iterations: int
    distances: List[float]
    ratios: List[float]
    windows: List[float]
    window_steps: List[int]
    residual: float
    R_max: float
    R0: Optional[float]
    balance: List[float] = dc_field(default_factory=list)
    total_iterations: int = 0
    certificate: Optional[float] = None
    diagnostics: Dict[str, float] = dc_field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def final_window(self) -> float:
        return self.windows[-1]

    @property
    def tail_ratio(self) -> Optional[float]:
        """Worst contraction ratio from ``e_2 / e_1`` on; ``None`` with fewer than two ratios."""
        if len(self.ratios) < 2:
            return None
        return max(self.ratios[1:])

    def to_dict(self) -> dict:
        out = asdict(self)
        out["final_window"] = self.final_window
        out["tail_ratio"] = self.tail_ratio
        return out


# ---------------------------------------------------------------------------
# Frozen coefficients
# ---------------------------------------------------------------------------

class _JetCache:
    """Jets of a fixed field for the level currently being marched."""

    def __init__(self, field: TriangleField, order: int):
        self.field = field
        self.order = order
        self._level: Optional[int] = None
        self._jet: Optional[Jet] = None
        self._lock = threading.Lock()

    def __call__(self, block: NodeBlock) -> Jet:
        j = block.j
        n = self.field.grid.n_tau
        with self._lock:
            if self._level != j:
                self._jet = jet_at(self.field, np.arange(j, n + 1), j, self.order)
                self._level = j
            full = self._jet
        idx = np.asarray(block.rows) - j
        if len(idx) == n + 1 - j and np.array_equal(idx, np.arange(n + 1 - j)):
            return full
        return Jet(full.order, {I: v[idx] for I, v in full.local.items()}, full.diagonal, full.d)


class _FrozenEvaluator(Evaluator):
    def __init__(self, ev: Evaluator, jets: _JetCache):
        super().__init__(ev.m, ev.kind, ev.label)
        self.ev = ev
        self.jets = jets

    def evaluate(self, block, jet=None):
        return self.ev(block, self.jets(block))

    @property
    def jet_dependent(self) -> bool:
        return False


def frozen_linear_spec(spec: QuasilinearSystemSpec, u_k: TriangleField) -> LinearSystemSpec:
    """Linear spec with ``A_top``, ``B_top`` and ``F_low`` evaluated on the jet of *u_k*; lower entries zero."""
    jets = _JetCache(u_k, spec.jet_order)

    def freeze(ev: Evaluator) -> Evaluator:
        if ev.is_zero or not ev.jet_dependent:
            return ev
        return _FrozenEvaluator(ev, jets)

    A = {I: freeze(ev) for I, ev in spec.A_top.items()}
    B = {I: freeze(ev) for I, ev in spec.B_top.items()}
    return LinearSystemSpec.from_coefficients(spec.d, spec.r, spec.m, A, B, freeze(spec.F_low), spec.g,
                                              name=f"{spec.name}_frozen")


def jet_distance(u: TriangleField, v: TriangleField, order: int) -> float:
    """Largest difference of any jet entry of order <= *order* between two fields."""
    diff = u.data - v.data
    best = 0.0
    for I in multi_indices(u.grid.d, order):
        best = max(best, float(np.max(np.abs(stencil_apply(diff, I, u.grid)))))
    return best


def check_ball(u: TriangleField, center: TriangleField, order: int, radius: float,
               where: str = "fixedpoint::gamma_map") -> float:
    dist = jet_distance(u, center, order)
    if dist > radius:
        raise BallExit(f"iterate jets left the ball: distance {dist:.6g} > R0={radius:.6g}", where)
    return dist


def gamma_map(u_k: TriangleField, spec: QuasilinearSystemSpec, grid: Optional[TriangleGrid] = None,
              scheme: Optional[SchemeConfig] = None, center: Optional[TriangleField] = None,
              radius: Optional[float] = None) -> TriangleField:
    """One application of Γ: freeze on the jet of *u_k*, solve the nonlocal linear system."""
    if grid is not None and not grid.same_lattice(u_k.grid):
        raise GridMismatch("iterate and grid differ", "fixedpoint::gamma_map")
    if radius is not None and center is not None:
        check_ball(u_k, center, spec.jet_order, radius)
    U, _ = solve_nonlocal_linear(frozen_linear_spec(spec, u_k), u_k.grid, scheme)
    return U


# ---------------------------------------------------------------------------
# Temporal variant
# ---------------------------------------------------------------------------

def _require_scalar(spec: FullyNonlinearSpec, where: str) -> None:
    if spec.m != 1:
        raise UnsupportedMultiComponent("the temporal variant is implemented for scalar problems", where)


def temporal_M(u_k: TriangleField, spec: FullyNonlinearSpec, grid: Optional[TriangleGrid] = None,
               scheme: Optional[SchemeConfig] = None) -> Tuple[TriangleField, TriangleField]:
    """``(w1, w2)`` with coefficients frozen on the jet of *u_k*.

    ``w2`` solves the local family ``w2_s = F_t + Σ F_{q_I} ∂_I w2`` from ``g_t``;
    ``w1`` then solves ``w1_s = F_s + Σ F_{q_I} ∂_I w1 + Σ F_{n_I} ∂_I w1(s,s)
    + Σ F_{n_I} ∂_I w2(s,s)`` from ``F`` evaluated at ``s = 0``.
    """
    where = "fixedpoint::temporal_M"
    _require_scalar(spec, where)
    if grid is not None and not grid.same_lattice(u_k.grid):
        raise GridMismatch("iterate and grid differ", where)
    grid = u_k.grid
    jets = _JetCache(u_k, spec.jet_order)
    indices = multi_indices(spec.d, spec.jet_order)

    def coefficient(var: str) -> Evaluator:
        if not spec.depends_on(var):
            return zero_matrix(1, f"F_{var}")
        return CallableEvaluator(
            lambda block, jet=None: np.asarray(spec.partial(var, block, jets(block)))[..., None],
            1, "matrix", f"F_{var}", jet_dependent=False)

    def source(var: str) -> Optional[Evaluator]:
        if not spec.depends_on(var):
            return None
        return CallableEvaluator(lambda block, jet=None: spec.partial(var, block, jets(block)),
                                 1, "vector", f"F_{var}", jet_dependent=False)

    A = {I: coefficient(index_name(I)) for I in indices}
    B = {I: coefficient(index_name(I, True)) for I in indices}

    g_t = InitialData(lambda t, y: spec.g.time_derivative(t, grid), 1, label="g_t")
    w2_spec = LinearSystemSpec.from_coefficients(spec.d, spec.r, 1, A, {}, source("t") or zero_vector(1),
                                                 g_t, name=f"{spec.name}_w2")
    w2 = solve_local_family(w2_spec, grid, scheme)

    f_s = source("s")
    diagonal_terms = [(I, ev) for I, ev in B.items() if not ev.is_zero]

    def w1_source(block: NodeBlock, jet=None) -> np.ndarray:
        out = f_s(block) if f_s is not None else np.zeros((1, 1, 1))
        w2_diag = diagonal_slice(w2, block.j)
        for I, ev in diagonal_terms:
            out = out + apply_matrix(ev(block), stencil_apply(w2_diag, I, grid))
        return out

    rows = np.arange(grid.n_tau + 1)
    start = np.broadcast_to(spec.F(grid.block(rows, 0), jet_at(u_k, rows, 0, spec.jet_order)),
                            (len(rows), grid.n_spatial, 1))
    w1_spec = LinearSystemSpec.from_coefficients(
        spec.d, spec.r, 1, A, B,
        CallableEvaluator(w1_source, 1, "vector", "w1_source", jet_dependent=False),
        InitialData.from_samples(start, grid, "F(g)"), name=f"{spec.name}_w1")
    w1, _ = solve_nonlocal_linear(w1_spec, grid, scheme)
    return w1, w2


def temporal_N(w1: TriangleField, g: InitialData) -> TriangleField:
    """``U = g + ∫_0^s w1 dτ`` by the composite trapezoid rule; ``U[i][0] = g(t_i)`` exactly."""
    grid = w1.grid
    U = TriangleField(grid)
    G = g.sample(grid)
    for i in range(grid.n_tau + 1):
        row = w1.row(i)
        acc = np.zeros_like(row)
        if i > 0:
            acc[1:] = np.cumsum(0.5 * (row[:-1] + row[1:]), axis=0)
        U.row(i)[:] = G[i] + grid.dtau * acc
    return U


# ---------------------------------------------------------------------------
# Residuals and diagnostics
# ---------------------------------------------------------------------------

AnySpec = Union[LinearSystemSpec, QuasilinearSystemSpec, FullyNonlinearSpec]


def evaluate_rhs(spec: AnySpec, u: TriangleField, rows: np.ndarray, j: int) -> np.ndarray:
    """Right-hand side of the equation at level *j* on the jets of *u*, shape ``(len(rows), N, m)``."""
    grid = u.grid
    block = grid.block(rows, j)
    U = u.data[grid.offsets(rows, j)]
    if isinstance(spec, FullyNonlinearSpec):
        return np.broadcast_to(spec.F(block, jet_at(u, rows, j, spec.jet_order)), U.shape)
    if isinstance(spec, LinearSystemSpec):
        spec = QuasilinearSystemSpec.from_linear(spec)
    jet = jet_at(u, rows, j, spec.jet_order)
    D = diagonal_slice(u, j)
    out = np.zeros_like(U)
    for I, ev in spec.A_top.items():
        if not ev.is_zero:
            out = out + apply_matrix(ev(block, jet), stencil_apply(U, I, grid))
    for I, ev in spec.B_top.items():
        if not ev.is_zero:
            out = out + apply_matrix(ev(block, jet), stencil_apply(D, I, grid))
    if not spec.F_low.is_zero:
        out = out + spec.F_low(block, jet)
    return out


def discrete_residual(u: TriangleField, spec: AnySpec) -> float:
    """Largest ``|D_s u - RHS(u)|`` with ``D_s`` the forward difference the marching scheme uses."""
    if isinstance(spec, LinearSystemSpec):
        spec = QuasilinearSystemSpec.from_linear(spec)
    grid = u.grid
    worst = 0.0
    for j in range(grid.n_tau):
        rows = np.arange(j + 1, grid.n_tau + 1)
        ds = (u.data[grid.offsets(rows, j + 1)] - u.data[grid.offsets(rows, j)]) / grid.dtau
        worst = max(worst, float(np.max(np.abs(ds - evaluate_rhs(spec, u, rows, j)))))
    return worst


def second_s_difference(u: TriangleField) -> float:
    """Largest ``|u[i][j+1] - 2u[i][j] + u[i][j-1]| / Δτ²`` over interior s-levels."""
    grid = u.grid
    worst = 0.0
    for i in range(2, grid.n_tau + 1):
        row = u.row(i)
        d2 = (row[2:] - 2.0 * row[1:-1] + row[:-2]) / (grid.dtau * grid.dtau)
        worst = max(worst, float(np.max(np.abs(d2))))
    return worst


# ---------------------------------------------------------------------------
# Drivers
# ---------------------------------------------------------------------------

@dataclass
class _Attempt:
    steps: int
    distances: List[float] = dc_field(default_factory=list)
    ratios: List[float] = dc_field(default_factory=list)
    r_max: float = 0.0
    outcome: str = "running"


def _picard(apply: Callable[[TriangleField], TriangleField], u0: TriangleField, cfg: FixedPointConfig,
            order: int, attempt: _Attempt, route: str) -> TriangleField:
    u = u0
    above = 0
    for k in tqdm(range(cfg.max_iter), desc=route, disable=not cfg.show_progress):
        if cfg.ball_radius is not None:
            check_ball(u, u0, order, cfg.ball_radius, f"fixedpoint::{route}")
        new = apply(u)
        e = float(np.max(np.abs(new.data - u.data)))
        if attempt.distances:
            prev = attempt.distances[-1]
            ratio = e / prev if prev > 0 else 0.0
            attempt.ratios.append(ratio)
            above = above + 1 if ratio > cfg.target_ratio else 0
        attempt.distances.append(e)
        attempt.r_max = max(attempt.r_max, float(np.max(np.abs(new.data - u0.data))))
        logger.debug("%s: window %d, iteration %d, distance %.3e", route, attempt.steps, k + 1, e)
        u = new
        if e <= cfg.tol:
            attempt.outcome = "converged"
            return u
        if above >= cfg.persistent:
            attempt.outcome = "stalled"
            return u
    attempt.outcome = "max_iter"
    raise MaxIterExceeded(f"no convergence within {cfg.max_iter} iterations", f"fixedpoint::{route}")


def _solve(spec, grid: TriangleGrid, cfg: FixedPointConfig, route: str, order: int,
           make_map: Callable[[TriangleGrid], Callable[[TriangleField], TriangleField]]):
    start = time.perf_counter()
    n = grid.n_tau
    attempts: List[_Attempt] = []
    while True:
        sub = grid if n == grid.n_tau else grid.truncated(n)
        attempt = _Attempt(steps=n)
        attempts.append(attempt)
        apply = make_map(sub)
        try:
            u = _picard(apply, initial_extension(spec.g, sub), cfg, order, attempt, route)
        except (MaxIterExceeded, BallExit) as exc:
            attempt.outcome = exc.code
            reason = exc.message
        else:
            if attempt.outcome == "converged":
                break
            reason = f"{cfg.persistent} consecutive ratios above {cfg.target_ratio}"
        new_n = int(math.floor(n * cfg.shrink))
        if new_n < cfg.min_window_steps:
            raise MaxIterExceeded(
                f"window of {n} steps failed ({reason}) and cannot shrink below "
                f"{cfg.min_window_steps} steps", f"fixedpoint::{route}")
        logger.info("%s: shrinking window from %d to %d steps (%s)", route, n, new_n, reason)
        n = new_n

    r = spec.r
    report = SolveReport(
        route=route,
        iterations=len(attempt.distances),
        distances=attempt.distances,
        ratios=attempt.ratios,
        windows=[a.steps * grid.dtau for a in attempts],
        window_steps=[a.steps for a in attempts],
        residual=0.0,
        R_max=max(a.r_max for a in attempts),
        R0=cfg.ball_radius,
        balance=[(a.steps * grid.dtau) ** (cfg.alpha / (2 * r)) * a.r_max for a in attempts],
        total_iterations=sum(len(a.distances) for a in attempts),
    )
    if cfg.certify:
        report.certificate = float(np.max(np.abs(apply(u).data - u.data)))
        if report.certificate > 2 * cfg.tol:
            logger.warning("%s: re-application distance %.3e exceeds 2*tol", route, report.certificate)
    report.wall_time = time.perf_counter() - start
    logger.info("%s: converged in %d iterations on a window of %d steps (%.3fs)",
                route, report.iterations, n, report.wall_time)
    return u, report


def solve_quasilinear_fixedpoint(spec: QuasilinearSystemSpec, grid: TriangleGrid,
                                 scheme: Optional[SchemeConfig] = None,
                                 cfg: Optional[FixedPointConfig] = None) -> Tuple[TriangleField, SolveReport]:
    """Picard iteration of Γ with window continuation."""
    where = "fixedpoint::solve_quasilinear_fixedpoint"
    spec.require_valid(where)
    if (spec.d, spec.r, spec.m) != (grid.d, grid.r, grid.m):
        raise InvalidParameter("spec and grid dimensions differ", where)
    cfg = cfg or FixedPointConfig()
    u, report = _solve(spec, grid, cfg, "quasilinear", spec.jet_order,
                       lambda sub: (lambda u: gamma_map(u, spec, scheme=scheme)))
    report.residual = discrete_residual(u, spec)
    return u, report


def solve_fully_nonlinear_temporal(spec: FullyNonlinearSpec, grid: TriangleGrid,
                                   scheme: Optional[SchemeConfig] = None,
                                   cfg: Optional[FixedPointConfig] = None) -> Tuple[TriangleField, SolveReport]:
    """Iterate ``N ∘ M`` from the constant-in-s extension of ``g``."""
    where = "fixedpoint::solve_fully_nonlinear_temporal"
    spec.require_valid(where)
    _require_scalar(spec, where)
    if (spec.d, spec.r) != (grid.d, grid.r) or grid.m != 1:
        raise InvalidParameter("spec and grid dimensions differ", where)
    cfg = cfg or FixedPointConfig()

    def make_map(sub: TriangleGrid):
        return lambda u: temporal_N(temporal_M(u, spec, scheme=scheme)[0], spec.g)

    u, report = _solve(spec, grid, cfg, "temporal", spec.jet_order, make_map)
    report.residual = discrete_residual(u, spec)
    report.diagnostics["second_s_difference"] = second_s_difference(u)
    return u, report
