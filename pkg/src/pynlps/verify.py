"""Verification tooling: manufactured solutions, an oracle recurrence and convergence studies.

A :class:`ManufacturedSolution` is a closed-form ``u*(t, s, y)`` together with
its ``s``/``t`` derivatives and the spatial derivatives the jets need.
:func:`mms_forcing` turns a skeleton spec into one that ``u*`` solves exactly,
and :func:`convergence_study` measures how fast the discrete solutions of that
forced problem approach ``u*``.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field as dc_field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from .errors import (
    CflViolation,
    GateFailure,
    GridMismatch,
    InvalidGridSequence,
    InvalidParameter,
    NonFiniteDetected,
    SelfCheckFailed,
)
from .expr import Expression, as_expression, derivative_fd, evaluate, to_string
from .fixedpoint import FixedPointConfig, solve_fully_nonlinear_temporal, solve_quasilinear_fixedpoint
from .grid import (
    Jet,
    MultiIndex,
    NodeBlock,
    TriangleField,
    TriangleGrid,
    axis_counts,
    build_grid,
    index_name,
    multi_indices,
    parse_index_name,
    stencil_apply,
)
from .linsolve import SchemeConfig, solve_nonlocal_linear
from .quasilin import solve_fully_nonlinear_spatial
from .systems.common import (
    CallableEvaluator,
    Evaluator,
    InitialData,
    apply_matrix,
    jet_bindings,
    zero_vector,
)
from .systems.fully_nonlinear import FullyNonlinearSpec
from .systems.linear import LinearSystemSpec
from .systems.quasilinear import QuasilinearSystemSpec

logger = logging.getLogger(__name__)

AnySpec = Union[LinearSystemSpec, QuasilinearSystemSpec, FullyNonlinearSpec]

ROUTES = ("linear", "quasilinear", "spatial", "temporal")
SELF_CHECK_TOL = 1e-6
RESIDUAL_TOL = 1e-12


# ---------------------------------------------------------------------------
# Manufactured solutions
# ---------------------------------------------------------------------------

def diagonal_block(block: NodeBlock) -> NodeBlock:
    """The same nodes with ``t`` replaced by ``s``."""
    s = np.broadcast_to(np.asarray(block.s, dtype=np.float64), block.t.shape).copy()
    return NodeBlock(t=s, s=block.s, y=block.y, rows=block.rows, j=block.j)


def random_block(d: int, n_times: int = 10, n_points: int = 100, T: float = 1.0, L: float = 2 * math.pi,
                 seed: int = 0) -> NodeBlock:
    """``n_times`` random ``(t, s)`` pairs with ``0 <= s <= t <= T`` against ``n_points`` random ``y``."""
    rng = np.random.default_rng(seed)
    t = rng.uniform(0.0, T, (n_times, 1))
    s = t * rng.uniform(0.0, 1.0, (n_times, 1))
    y = rng.uniform(0.0, L, (d, n_points))
    return NodeBlock(t=t, s=s, y=y)


class ManufacturedSolution:
    """Closed-form scalar ``u*(t, s, y)``.

    ``terms`` holds ``u``, ``u_s``, ``u_t`` and ``d_<jet>`` expressions
    (``d_p1``, ``d_q11``, ``d_c111``...).  Construction differentiates every
    supplied derivative numerically at 100 random points and raises
    :class:`SelfCheckFailed` on a mismatch above ``1e-6``.
    """

    def __init__(self, terms: Mapping[str, Union[str, float, Expression]], d: int = 1, name: str = "u_star",
                 self_check: bool = True):
        where = "verify::ManufacturedSolution"
        if "u" not in terms:
            raise InvalidParameter("a manufactured solution needs a 'u' term", where)
        self.d = d
        self.name = name
        self.u = as_expression(terms["u"])
        self.u_s = as_expression(terms["u_s"]) if "u_s" in terms else None
        self.u_t = as_expression(terms["u_t"]) if "u_t" in terms else None
        self.derivatives: Dict[MultiIndex, Expression] = {}
        for key, text in terms.items():
            if key in ("u", "u_s", "u_t"):
                continue
            parsed = parse_index_name(key[2:]) if key.startswith("d_") else None
            if parsed is None or parsed[1] or not parsed[0] or any(a >= d for a in parsed[0]):
                raise InvalidParameter(f"unknown manufactured-solution term '{key}' for d={d}", where)
            self.derivatives[parsed[0]] = as_expression(text)
        if self.u_s is None:
            raise InvalidParameter("a manufactured solution needs a 'u_s' term", where)
        if self_check:
            self.self_check()

    @classmethod
    def from_dict(cls, payload: Mapping[str, object], d: Optional[int] = None) -> "ManufacturedSolution":
        terms = payload.get("terms", payload)
        return cls(terms, int(d if d is not None else payload.get("d", 1)), str(payload.get("name", "u_star")))

    @property
    def max_order(self) -> int:
        return max((len(I) for I in self.derivatives), default=0)

    def _eval(self, expr: Expression, block: NodeBlock) -> np.ndarray:
        values = np.asarray(evaluate(expr, jet_bindings(block)), dtype=np.float64)
        return np.broadcast_to(values, block.shape).copy()[..., None]

    def value(self, block: NodeBlock) -> np.ndarray:
        """``u*`` at *block*, shape ``(K, N, 1)``."""
        return self._eval(self.u, block)

    def s_derivative(self, block: NodeBlock) -> np.ndarray:
        return self._eval(self.u_s, block)

    def t_derivative(self, block: NodeBlock) -> np.ndarray:
        if self.u_t is None:
            raise InvalidParameter(f"{self.name} has no 'u_t' term", "verify::ManufacturedSolution")
        return self._eval(self.u_t, block)

    def derivative(self, I: MultiIndex, block: NodeBlock) -> np.ndarray:
        I = tuple(sorted(I))
        if not I:
            return self.value(block)
        if I not in self.derivatives:
            raise InvalidParameter(f"{self.name} has no 'd_{index_name(I)}' term",
                                   "verify::ManufacturedSolution")
        return self._eval(self.derivatives[I], block)

    def jet(self, block: NodeBlock, order: int) -> Jet:
        """Analytic jet at ``(t, s, y)`` and ``(s, s, y)``."""
        diag = diagonal_block(block)
        indices = multi_indices(self.d, order)
        local = {I: self.derivative(I, block) for I in indices}
        diagonal = {I: self.derivative(I, diag) for I in indices}
        return Jet(order, local, diagonal, self.d)

    def to_field(self, grid: TriangleGrid) -> TriangleField:
        return TriangleField.from_function(grid, lambda t, s, y: self.value(NodeBlock(t=t, s=s, y=y)))

    def initial_data(self) -> InitialData:
        """``g(t, y) = u*(t, 0, y)`` with analytic spatial derivatives and ``g_t``."""
        def at_zero(expr: Expression):
            def fn(t, y):
                t_arr = np.asarray(t, dtype=np.float64)
                block = NodeBlock(t=t_arr, s=0.0, y=y)
                values = np.asarray(evaluate(expr, jet_bindings(block)), dtype=np.float64)
                return values[..., None]

            return fn

        derivatives = {I: at_zero(e) for I, e in self.derivatives.items()}
        g_t = at_zero(self.u_t) if self.u_t is not None else None
        return InitialData(at_zero(self.u), 1, derivatives, g_t, f"{self.name}_g")

    def self_check(self, n_points: int = 100, tol: float = SELF_CHECK_TOL, seed: int = 0) -> None:
        """Compare every supplied derivative with a central difference of its parent."""
        block = random_block(self.d, 10, max(1, n_points // 10), seed=seed)
        bindings = jet_bindings(block)
        checks: List[Tuple[str, Expression, Expression, str]] = [("u_s", self.u_s, self.u, "s")]
        if self.u_t is not None:
            checks.append(("u_t", self.u_t, self.u, "t"))
        for I in sorted(self.derivatives, key=lambda J: (len(J), J)):
            parent = I[:-1]
            parent_expr = self.u if not parent else self.derivatives.get(parent)
            if parent_expr is None:
                continue
            checks.append((f"d_{index_name(I)}", self.derivatives[I], parent_expr, f"y{I[-1] + 1}"))
        for label, expr, parent, var in checks:
            analytic = np.asarray(evaluate(expr, bindings), dtype=np.float64)
            numeric = np.asarray(derivative_fd(parent, var, bindings), dtype=np.float64)
            err = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))
            worst = float(np.max(err))
            if not worst <= tol:
                raise SelfCheckFailed(
                    f"{self.name}: '{label}' disagrees with the numeric derivative (relative error {worst:.3e})",
                    "verify::ManufacturedSolution")
        logger.debug("%s passed its derivative self-check (%d terms)", self.name, len(checks))

    def to_dict(self) -> dict:
        terms = {"u": to_string(self.u), "u_s": to_string(self.u_s)}
        if self.u_t is not None:
            terms["u_t"] = to_string(self.u_t)
        terms.update({f"d_{index_name(I)}": to_string(e) for I, e in self.derivatives.items()})
        return {"name": self.name, "d": self.d, "terms": terms}


# ---------------------------------------------------------------------------
# Forcing
# ---------------------------------------------------------------------------

def continuum_rhs(spec: AnySpec, u_star: ManufacturedSolution, block: NodeBlock) -> np.ndarray:
    """Right-hand side of *spec* evaluated on the analytic jets of ``u*``."""
    if isinstance(spec, FullyNonlinearSpec):
        value = spec.F(block, u_star.jet(block, spec.jet_order))
        return np.broadcast_to(np.asarray(value, dtype=np.float64), block.shape + (1,)).copy()
    out = np.zeros(block.shape + (1,))
    diag = diagonal_block(block)
    if isinstance(spec, LinearSystemSpec):
        for I, ev in spec.A.items():
            if not ev.is_zero:
                out = out + apply_matrix(ev(block), u_star.derivative(I, block))
        for I, ev in spec.B.items():
            if not ev.is_zero:
                out = out + apply_matrix(ev(block), u_star.derivative(I, diag))
        if not spec.f.is_zero:
            out = out + spec.f(block)
        return out
    jet = u_star.jet(block, spec.jet_order)
    for I, ev in spec.A_top.items():
        if not ev.is_zero:
            out = out + apply_matrix(ev(block, jet), u_star.derivative(I, block))
    for I, ev in spec.B_top.items():
        if not ev.is_zero:
            out = out + apply_matrix(ev(block, jet), u_star.derivative(I, diag))
    if not spec.F_low.is_zero:
        out = out + spec.F_low(block, jet)
    return out


class ForcedNonlinearity(Evaluator):
    """``F(block, jet) + h(t, s, y)``; jet derivatives are those of ``F``."""

    def __init__(self, base: Evaluator, forcing: Evaluator):
        super().__init__(base.m, "vector", f"{base.label}+h")
        self.base = base
        self.forcing = forcing

    def evaluate(self, block, jet=None):
        return self.base(block, jet) + self.forcing(block)

    def depends_on(self, var: str) -> bool:
        if parse_index_name(var) is not None:
            return self.base.depends_on(var)
        return True

    @property
    def jet_dependent(self) -> bool:
        return self.base.jet_dependent

    def partial(self, var, block, jet=None):
        if parse_index_name(var) is not None:
            return self.base.partial(var, block, jet)
        return self.base.partial(var, block, jet) + self.forcing.partial(var, block)

    def second_partial(self, var1, var2, block, jet=None):
        if parse_index_name(var1) is not None and parse_index_name(var2) is not None:
            return self.base.second_partial(var1, var2, block, jet)
        return super().second_partial(var1, var2, block, jet)


def mms_forcing(u_star: ManufacturedSolution, skeleton: AnySpec, check: bool = True) -> AnySpec:
    """A copy of *skeleton* forced so that ``u*`` solves it exactly, with ``g = u*(·, 0, ·)``.

    Linear specs get ``f := u*_s - Σ A ∂u* - Σ B ∂u*(s,s)``; quasilinear and
    fully-nonlinear specs get ``u*_s - RHS(u*)`` added to their nonlinearity.
    """
    where = "verify::mms_forcing"
    if skeleton.m != 1:
        raise InvalidParameter("manufactured solutions are scalar; the skeleton has m > 1", where)
    if skeleton.d != u_star.d:
        raise InvalidParameter(f"u* is defined for d={u_star.d}, the skeleton has d={skeleton.d}", where)
    g = u_star.initial_data()
    name = f"{skeleton.name}_mms"

    if isinstance(skeleton, LinearSystemSpec):
        operator = skeleton.with_data(f=zero_vector(1))

        def h(block, jet=None):
            return u_star.s_derivative(block) - continuum_rhs(operator, u_star, block)

        forced: AnySpec = skeleton.with_data(
            f=CallableEvaluator(h, 1, "vector", "f_mms", jet_dependent=False), g=g, name=name)
    else:
        def h(block, jet=None):
            return u_star.s_derivative(block) - continuum_rhs(skeleton, u_star, block)

        forcing = CallableEvaluator(h, 1, "vector", "h_mms", jet_dependent=False)
        if isinstance(skeleton, QuasilinearSystemSpec):
            base = skeleton.F_low

            def f_low(block, jet=None):
                return base(block, jet) + forcing(block)

            F_low = CallableEvaluator(f_low, 1, "vector", "F", jet_dependent=base.jet_dependent)
            callbacks = {key: cb for key, cb in skeleton.derivatives.items()
                         if key[0] != "F" or parse_index_name(key[1]) is not None}
            forced = QuasilinearSystemSpec(skeleton.d, skeleton.r, 1, skeleton.A_top, skeleton.B_top, F_low, g,
                                           callbacks, name, skeleton.allow_fd)
        else:
            forced = FullyNonlinearSpec(skeleton.d, skeleton.r, ForcedNonlinearity(skeleton.F, forcing), g, 1,
                                        name, skeleton.allow_fd)
    if check:
        worst, scale = mms_residual(u_star, forced)
        if not worst <= RESIDUAL_TOL * scale:
            raise SelfCheckFailed(f"forced {skeleton.name} leaves a continuum residual {worst:.3e}", where)
    logger.info("built manufactured forcing for %s from %s", skeleton.name, u_star.name)
    return forced


def mms_residual(u_star: ManufacturedSolution, spec: AnySpec, n_times: int = 10, n_points: int = 100,
                 seed: int = 1) -> Tuple[float, float]:
    """Largest ``|u*_s - RHS(u*)|`` on random continuum nodes and the magnitude it is measured against."""
    block = random_block(spec.d, n_times, n_points, seed=seed)
    u_s = u_star.s_derivative(block)
    rhs = continuum_rhs(spec, u_star, block)
    scale = max(1.0, float(np.max(np.abs(u_s))), float(np.max(np.abs(rhs))))
    return float(np.max(np.abs(u_s - rhs))), scale


# ---------------------------------------------------------------------------
# Reference solvers
# ---------------------------------------------------------------------------

def _scalar_stencil(values: List[float], I: MultiIndex, n_y: int, d: int, dy: float) -> List[float]:
    """Central differences on a flat row-major periodic lattice, one node at a time."""
    u = list(values)
    strides = [n_y ** (d - 1 - a) for a in range(d)]

    def neighbour(k: int, axis: int, step: int) -> int:
        coord = (k // strides[axis]) % n_y
        return k + (((coord + step) % n_y) - coord) * strides[axis]

    for axis, c in enumerate(axis_counts(tuple(sorted(I)), d)):
        for _ in range(c // 2):
            u = [(u[neighbour(k, axis, 1)] - 2.0 * u[k] + u[neighbour(k, axis, -1)]) / (dy * dy)
                 for k in range(len(u))]
        if c % 2:
            u = [(u[neighbour(k, axis, 1)] - u[neighbour(k, axis, -1)]) / (2.0 * dy) for k in range(len(u))]
    return u


def naive_oracle_solve(spec: LinearSystemSpec, grid: TriangleGrid, cfl_safety: float = 0.9) -> TriangleField:
    """Explicit nonlocal recurrence written as plain nested loops over ``i``, ``j`` and nodes.

    Coefficients are combined in canonical multi-index order (A terms, then B
    terms, then ``f``), so on small grids the result matches the vectorized
    solver bit for bit.
    """
    where = "verify::naive_oracle_solve"
    spec.require_valid(where)
    if (spec.d, spec.r, spec.m) != (grid.d, grid.r, grid.m):
        raise InvalidParameter("spec and grid dimensions differ", where)
    n, m, N = grid.n_tau, grid.m, grid.n_spatial
    dtau, dy = grid.dtau, grid.dy
    top = 2 * grid.r
    u: Dict[Tuple[int, int], List[List[float]]] = {}
    g = spec.g.sample(grid)
    for i in range(n + 1):
        if not np.isfinite(g[i]).all():
            raise NonFiniteDetected(i, 0, where)
        u[(i, 0)] = [[float(g[i, k, a]) for a in range(m)] for k in range(N)]

    def component(rows: List[List[float]], a: int) -> List[float]:
        return [rows[k][a] for k in range(N)]

    def coefficients(ev: Evaluator, block: NodeBlock) -> np.ndarray:
        return np.broadcast_to(np.asarray(ev(block), dtype=np.float64), (1, N, m, m))[0]

    for j in range(n):
        diag_block_values = u[(j, j)]
        for i in range(j + 1, n + 1):
            block = grid.block([i], j)
            U = u[(i, j)]
            rhs = [[0.0] * m for _ in range(N)]
            limit_a = 0.0
            limit_b = 0.0
            for table, source in ((spec.A, U), (spec.B, diag_block_values)):
                for I in multi_indices(grid.d, top):
                    ev = table[I]
                    if ev.is_zero:
                        continue
                    C = coefficients(ev, block)
                    if len(I) == top:
                        row_sum = float(np.max(np.abs(C).sum(axis=-1)))
                        if table is spec.A:
                            limit_a += row_sum
                        else:
                            limit_b += row_sum
                    derivs = [_scalar_stencil(component(source, b), I, grid.n_y, grid.d, dy) for b in range(m)]
                    for k in range(N):
                        for a in range(m):
                            if m == 1:
                                rhs[k][a] = rhs[k][a] + C[k, 0, 0] * derivs[0][k]
                            else:
                                acc = 0.0
                                for b in range(m):
                                    acc = acc + C[k, a, b] * derivs[b][k]
                                rhs[k][a] = rhs[k][a] + acc
            if not spec.f.is_zero:
                F = np.broadcast_to(np.asarray(spec.f(block), dtype=np.float64), (1, N, m))[0]
                for k in range(N):
                    for a in range(m):
                        rhs[k][a] = rhs[k][a] + F[k, a]
            bound = (limit_a + limit_b) * (2.0 ** top) * grid.d ** 2 / (dy ** top)
            if bound * dtau > cfl_safety:
                raise CflViolation(f"Δτ={dtau:.6g} exceeds the explicit stability limit at level j={j}", where)
            new = [[U[k][a] + dtau * rhs[k][a] for a in range(m)] for k in range(N)]
            if not all(math.isfinite(x) for row in new for x in row):
                raise NonFiniteDetected(i, j + 1, where)
            u[(i, j + 1)] = new

    out = TriangleField(grid)
    for (i, j), rows in u.items():
        out.data[grid.offset(i, j)] = np.asarray(rows)
    return out


def heat_reference_stepper(initial: np.ndarray, a: float, dtau: float, dy: float, steps: int) -> np.ndarray:
    """Textbook explicit Euler for ``u_s = a u_yy`` on a periodic line; returns ``(steps+1, N)``."""
    u = np.asarray(initial, dtype=np.float64).copy()
    out = [u.copy()]
    for _ in range(steps):
        u = u + a * dtau * (np.roll(u, -1) - 2.0 * u + np.roll(u, 1)) / (dy * dy)
        out.append(u.copy())
    return np.asarray(out)


# ---------------------------------------------------------------------------
# Field comparisons
# ---------------------------------------------------------------------------

def compare_fields(a: TriangleField, b: TriangleField) -> Dict[str, float]:
    """``sup`` and weighted ``L²`` difference; the weight is ``Δτ·Δy^d`` per node."""
    if not a.grid.same_lattice(b.grid) or a.grid.m != b.grid.m:
        raise GridMismatch(f"fields live on different grids: {a.grid.to_dict()} vs {b.grid.to_dict()}",
                           "verify::compare_fields")
    diff = a.data - b.data
    weight = a.grid.dtau * a.grid.dy ** a.grid.d
    return {
        "sup_diff": float(np.max(np.abs(diff))) if diff.size else 0.0,
        "l2_diff": float(math.sqrt(weight * float(np.sum(diff * diff)))),
    }


def compare_gradients(u: TriangleField, v_fields: Sequence[TriangleField]) -> Dict[str, float]:
    """``sup |∂_k u - v^(k)|`` per spatial axis, keyed ``y1``, ``y2``..."""
    out = {}
    for k, v in enumerate(v_fields):
        if not u.grid.same_lattice(v.grid):
            raise GridMismatch("gradient fields live on a different grid", "verify::compare_gradients")
        out[f"y{k + 1}"] = float(np.max(np.abs(stencil_apply(u.data, (k,), u.grid) - v.data)))
    return out


def compare_schemes(spec: LinearSystemSpec, grid: TriangleGrid, tol_factor: float = 5.0) -> Dict[str, float]:
    """Explicit versus IMEX solutions of the same linear problem."""
    explicit, _ = solve_nonlocal_linear(spec, grid, SchemeConfig(kind="explicit"))
    imex, _ = solve_nonlocal_linear(spec, grid, SchemeConfig(kind="imex"))
    out = compare_fields(explicit, imex)
    scale = max(1.0, explicit.sup_norm())
    out["tolerance"] = tol_factor * grid.dtau * scale
    out["passed"] = out["sup_diff"] <= out["tolerance"]
    return out


# ---------------------------------------------------------------------------
# Manufactured-solution gate and convergence studies
# ---------------------------------------------------------------------------

def default_route(spec: AnySpec) -> str:
    if isinstance(spec, LinearSystemSpec):
        return "linear"
    if isinstance(spec, QuasilinearSystemSpec):
        return "quasilinear"
    return "spatial"


def solve_route(spec: AnySpec, grid: TriangleGrid, route: str, scheme: Optional[SchemeConfig] = None,
                cfg: Optional[FixedPointConfig] = None):
    """Dispatch to the solver of *route*; returns ``(u, report)``."""
    if route not in ROUTES:
        raise InvalidParameter(f"route must be one of {ROUTES}, got {route!r}", "verify::solve_route")
    if route == "linear":
        if not isinstance(spec, LinearSystemSpec):
            raise InvalidParameter("the linear route needs a linear spec", "verify::solve_route")
        return solve_nonlocal_linear(spec, grid, scheme)
    if route == "quasilinear":
        if isinstance(spec, LinearSystemSpec):
            spec = QuasilinearSystemSpec.from_linear(spec)
        if not isinstance(spec, QuasilinearSystemSpec):
            raise InvalidParameter("the quasilinear route needs a linear or quasilinear spec",
                                   "verify::solve_route")
        return solve_quasilinear_fixedpoint(spec, grid, scheme, cfg)
    if not isinstance(spec, FullyNonlinearSpec):
        raise InvalidParameter(f"the {route} route needs a fully-nonlinear spec", "verify::solve_route")
    if route == "spatial":
        return solve_fully_nonlinear_spatial(spec, grid, scheme, cfg)
    return solve_fully_nonlinear_temporal(spec, grid, scheme, cfg)


@dataclass
class MMSReport:
    route: str
    continuum_residual: float
    sup_error: float
    l2_error: float
    tolerance: float
    scale: float
    passed: bool
    grid: Dict[str, float] = dc_field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def mms_check(spec: AnySpec, u_star: ManufacturedSolution, grid: TriangleGrid, route: Optional[str] = None,
              tol_factor: float = 50.0, scheme: Optional[SchemeConfig] = None,
              cfg: Optional[FixedPointConfig] = None, force: bool = True, given_tol: float = 1e-8) -> MMSReport:
    """Solve the manufactured problem and gate the error at ``tol_factor·(Δτ + Δy²)·scale``.

    With ``force=False`` the forcing already inside *spec* is trusted only if
    ``u*`` solves the continuum problem to ``given_tol`` relative accuracy.
    """
    where = "verify::mms_check"
    if force:
        spec = mms_forcing(u_star, spec)
    residual, magnitude = mms_residual(u_star, spec)
    if not force and not residual <= given_tol * magnitude:
        raise GateFailure(f"u* does not solve the configured problem (continuum residual {residual:.3e})", where)
    route = route or default_route(spec)
    u, _ = solve_route(spec, grid, route, scheme, cfg)
    exact = u_star.to_field(u.grid)
    diff = compare_fields(u, exact)
    scale = max(1.0, exact.sup_norm())
    tolerance = tol_factor * (u.grid.dtau + u.grid.dy ** 2) * scale
    report = MMSReport(route, residual, diff["sup_diff"], diff["l2_diff"], tolerance, scale,
                       diff["sup_diff"] <= tolerance, u.grid.to_dict())
    if not report.passed:
        raise GateFailure(f"manufactured-solution error {report.sup_error:.3e} exceeds {tolerance:.3e}", where)
    logger.info("%s: manufactured-solution error %.3e within %.3e", spec.name, report.sup_error, tolerance)
    return report


@dataclass
class ConvergenceResult:
    problem: str
    route: str
    n_y: List[int]
    n_tau: List[int]
    dy: List[float]
    dtau: List[float]
    sup_errors: List[float]
    l2_errors: List[float]
    spatial_order: float
    temporal_order: float
    spatial_stderr: float
    temporal_stderr: float
    wall_times: List[float] = dc_field(default_factory=list)

    @property
    def spatial_ci95(self) -> Tuple[float, float]:
        return (self.spatial_order - 1.96 * self.spatial_stderr, self.spatial_order + 1.96 * self.spatial_stderr)

    @property
    def temporal_ci95(self) -> Tuple[float, float]:
        return (self.temporal_order - 1.96 * self.temporal_stderr,
                self.temporal_order + 1.96 * self.temporal_stderr)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "n_y": self.n_y, "n_tau": self.n_tau, "dy": self.dy, "dtau": self.dtau,
            "sup_error": self.sup_errors, "l2_error": self.l2_errors, "wall_time": self.wall_times,
        })

    def to_dict(self) -> dict:
        out = asdict(self)
        out["spatial_ci95"] = list(self.spatial_ci95)
        out["temporal_ci95"] = list(self.temporal_ci95)
        return out


def fit_order(steps: Sequence[float], errors: Sequence[float]) -> Tuple[float, float]:
    """Least-squares slope of ``log(error)`` against ``log(step)`` and its standard error."""
    x = np.log(np.asarray(steps, dtype=np.float64))
    y = np.log(np.asarray(errors, dtype=np.float64))
    slope, intercept = np.polyfit(x, y, 1)
    if len(x) <= 2:
        return float(slope), 0.0
    resid = y - (slope * x + intercept)
    sxx = float(np.sum((x - x.mean()) ** 2))
    stderr = math.sqrt(float(np.sum(resid * resid)) / (len(x) - 2) / sxx) if sxx > 0 else float("inf")
    return float(slope), stderr


def convergence_study(skeleton: AnySpec, u_star: ManufacturedSolution, grids: Sequence[Tuple[int, int]],
                      route: Optional[str] = None, T: float = 1.0, L: float = 2 * math.pi,
                      scheme: Optional[SchemeConfig] = None, cfg: Optional[FixedPointConfig] = None,
                      show_progress: bool = False) -> ConvergenceResult:
    """Solve the manufactured problem on each ``(n_y, n_tau)`` and fit the observed orders."""
    where = "verify::convergence_study"
    grids = [(int(a), int(b)) for a, b in grids]
    if len(grids) < 3:
        raise InvalidGridSequence(f"a convergence study needs at least 3 grids, got {len(grids)}", where)
    for (ny0, nt0), (ny1, nt1) in zip(grids, grids[1:]):
        if not (ny1 > ny0 and nt1 >= nt0):
            raise InvalidGridSequence(f"grids must refine: ({ny0}, {nt0}) -> ({ny1}, {nt1})", where)
    forced = mms_forcing(u_star, skeleton)
    route = route or default_route(forced)
    result = ConvergenceResult(skeleton.name, route, [], [], [], [], [], [], float("nan"), float("nan"),
                               float("nan"), float("nan"))
    for n_y, n_tau in tqdm(grids, desc="convergence", disable=not show_progress):
        grid = build_grid(T, n_tau, L, n_y, skeleton.d, skeleton.r, 1)
        start = time.perf_counter()
        u, _ = solve_route(forced, grid, route, scheme, cfg)
        elapsed = time.perf_counter() - start
        diff = compare_fields(u, u_star.to_field(u.grid))
        result.n_y.append(n_y)
        result.n_tau.append(n_tau)
        result.dy.append(grid.dy)
        result.dtau.append(grid.dtau)
        result.sup_errors.append(diff["sup_diff"])
        result.l2_errors.append(diff["l2_diff"])
        result.wall_times.append(elapsed)
        logger.info("%s on n_y=%d, n_tau=%d: sup error %.3e", route, n_y, n_tau, diff["sup_diff"])
    if min(result.sup_errors) <= 0.0:
        logger.warning("%s: zero error on some grid; orders are undefined", skeleton.name)
        return result
    result.spatial_order, result.spatial_stderr = fit_order(result.dy, result.sup_errors)
    result.temporal_order, result.temporal_stderr = fit_order(result.dtau, result.sup_errors)
    logger.info("%s: spatial order %.3f ± %.3f, temporal order %.3f ± %.3f", skeleton.name,
                result.spatial_order, 1.96 * result.spatial_stderr, result.temporal_order,
                1.96 * result.temporal_stderr)
    return result
