"""Evaluator plumbing shared by the system classes.

An evaluator maps a :class:`~pynlps.grid.NodeBlock` (and, for quasilinear and
fully-nonlinear specs, a :class:`~pynlps.grid.Jet`) to an array that
broadcasts against ``(K, N, m, m)`` (matrix evaluators) or ``(K, N, m)``
(vector evaluators).  Partial derivatives are analytic when an expression for
them was supplied and finite differences otherwise; the fallback is logged
once per evaluator and variable.
"""
from __future__ import annotations

import logging
import threading
from typing import Callable, Dict, Mapping, Optional, Sequence, Set, Tuple, Union

import numpy as np

from ..errors import EvaluatorFailure, MissingDerivativeCallback, NLPSError
from ..expr import (
    Expression,
    as_expression,
    derivative_fd,
    evaluate,
    fd_step,
    is_constant,
    second_derivative_fd,
    variables,
)
from ..grid import (
    Jet,
    MultiIndex,
    NodeBlock,
    TriangleGrid,
    index_name,
    multi_indices,
    parse_index_name,
    stencil_apply,
)

logger = logging.getLogger(__name__)

_EPS = float(np.finfo(float).eps)
_fd_notices: Set[Tuple[str, str]] = set()
_fd_lock = threading.Lock()


def _notice_fd(label: str, var: str) -> None:
    key = (label, var)
    with _fd_lock:
        if key in _fd_notices:
            return
        _fd_notices.add(key)
    logger.warning("no analytic derivative of %s w.r.t. %s; using finite differences", label, var)


def jet_bindings(block: NodeBlock, jet: Optional[Jet] = None, component: int = 0) -> Dict[str, object]:
    """Expression bindings for *block*: ``t``, ``s``, ``y1..yd`` and, with a jet, every jet identifier."""
    b: Dict[str, object] = {"t": block.t, "s": block.s}
    for k in range(block.y.shape[0]):
        b[f"y{k + 1}"] = block.y[k]
    if jet is not None:
        for I, values in jet.local.items():
            b[index_name(I)] = values[..., component]
        for I, values in jet.diagonal.items():
            b[index_name(I, True)] = values[..., component]
    return b


def apply_matrix(coef: np.ndarray, values: np.ndarray) -> np.ndarray:
    """``coef @ values`` over the trailing component axis with broadcasting."""
    coef = np.asarray(coef)
    if values.shape[-1] == 1:
        return coef[..., 0, :] * values
    return np.einsum("...ab,...b->...a", coef, values)


def matrix_norm(coef: np.ndarray) -> np.ndarray:
    """Max-row-sum norm of the trailing ``(m, m)`` block."""
    return np.abs(np.asarray(coef)).sum(axis=-1).max(axis=-1)


# ---------------------------------------------------------------------------
# Expression functions
# ---------------------------------------------------------------------------

class ExpressionFunction:
    """Scalar expression with optional analytic partial-derivative expressions.

    ``derivatives`` maps a variable name (``q11``, ``nq11``, ``t``, ``y1``...) to
    the expression of the partial derivative w.r.t. that variable.
    """

    def __init__(self, expr: Union[str, Expression], derivatives: Optional[Mapping[str, Union[str, Expression]]] = None,
                 label: str = "F", allow_fd: bool = True, scale: float = 1.0):
        self.expr = as_expression(expr)
        self.derivatives = {k: as_expression(v) for k, v in (derivatives or {}).items()}
        self.label = label
        self.allow_fd = allow_fd
        self.scale = scale
        self.vars = variables(self.expr)
        self.constant = is_constant(self.expr)

    def depends_on(self, var: str) -> bool:
        return var in self.vars

    def value(self, bindings: Mapping[str, object]):
        return evaluate(self.expr, bindings)

    def partial(self, var: str, bindings: Mapping[str, object]):
        if var in self.derivatives:
            return evaluate(self.derivatives[var], bindings)
        if var not in self.vars:
            return 0.0
        if not self.allow_fd:
            raise MissingDerivativeCallback(
                f"{self.label} has no analytic derivative w.r.t. {var}", "systems::partial"
            )
        _notice_fd(self.label, var)
        return derivative_fd(self.expr, var, bindings, self.scale)

    def second_partial(self, var1: str, var2: str, bindings: Mapping[str, object]):
        if var1 not in self.vars or var2 not in self.vars:
            return 0.0
        if var1 in self.derivatives:
            first = self.derivatives[var1]
            if var2 not in variables(first):
                return 0.0
            return derivative_fd(first, var2, bindings, self.scale)
        if not self.allow_fd:
            raise MissingDerivativeCallback(
                f"{self.label} has no analytic derivative w.r.t. {var1}", "systems::second_partial"
            )
        _notice_fd(self.label, f"{var1},{var2}")
        return second_derivative_fd(self.expr, var1, var2, bindings, self.scale)


# ---------------------------------------------------------------------------
# Evaluators
# ---------------------------------------------------------------------------

class Evaluator:
    """Base evaluator; subclasses implement :meth:`evaluate`.

    ``kind`` is ``"matrix"`` or ``"vector"``.  Numeric partial derivatives
    perturb ``t``, ``s``, ``y<k>`` or a jet entry by a scalar central step.
    """

    kind = "vector"
    is_zero = False
    label = "H"

    def __init__(self, m: int = 1, kind: str = "vector", label: str = "H"):
        self.m = m
        self.kind = kind
        self.label = label

    def evaluate(self, block: NodeBlock, jet: Optional[Jet] = None) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, block: NodeBlock, jet: Optional[Jet] = None) -> np.ndarray:
        try:
            return self.evaluate(block, jet)
        except NLPSError:
            raise
        except Exception as exc:
            raise EvaluatorFailure(f"{self.label} failed: {exc}", "systems::evaluate") from exc

    def depends_on(self, var: str) -> bool:
        return True

    @property
    def jet_dependent(self) -> bool:
        return True

    def partial(self, var: str, block: NodeBlock, jet: Optional[Jet] = None) -> np.ndarray:
        if not self.depends_on(var):
            return np.zeros(1)
        _notice_fd(self.label, var)
        x = _variable_value(var, block, jet)
        h = float(fd_step(np.max(np.abs(x)) if np.size(x) else 0.0))
        bp, jp = _perturbed(var, block, jet, h)
        bm, jm = _perturbed(var, block, jet, -h)
        return (self(bp, jp) - self(bm, jm)) / (2.0 * h)

    def second_partial(self, var1: str, var2: str, block: NodeBlock, jet: Optional[Jet] = None) -> np.ndarray:
        if not (self.depends_on(var1) and self.depends_on(var2)):
            return np.zeros(1)
        x1 = _variable_value(var1, block, jet)
        h = float(fd_step(np.max(np.abs(x1)) if np.size(x1) else 0.0, power=0.25))
        if var1 == var2:
            bp, jp = _perturbed(var1, block, jet, h)
            bm, jm = _perturbed(var1, block, jet, -h)
            return (self(bp, jp) - 2.0 * self(block, jet) + self(bm, jm)) / (h * h)
        x2 = _variable_value(var2, block, jet)
        k = float(fd_step(np.max(np.abs(x2)) if np.size(x2) else 0.0, power=0.25))

        def at(a: float, c: float) -> np.ndarray:
            b1, j1 = _perturbed(var1, block, jet, a * h)
            b2, j2 = _perturbed(var2, b1, j1, c * k)
            return self(b2, j2)

        return (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * h * k)


def _variable_value(var: str, block: NodeBlock, jet: Optional[Jet]):
    if var == "t":
        return block.t
    if var == "s":
        return block.s
    if var.startswith("y") and var[1:].isdigit():
        return block.y[int(var[1:]) - 1]
    if jet is None:
        raise EvaluatorFailure(f"variable {var} needs a jet", "systems::partial")
    return jet.get(var)


def _perturbed(var: str, block: NodeBlock, jet: Optional[Jet], h: float):
    if var == "t":
        return block.shifted(dt=h), jet
    if var == "s":
        return block.shifted(ds=h), jet
    if var.startswith("y") and var[1:].isdigit():
        return block.shifted(dy=(int(var[1:]) - 1, h)), jet
    return block, jet.replaced(var, jet.get(var) + h)


class ConstantEvaluator(Evaluator):
    """Constant matrix or vector; zero constants are skipped by the solvers."""

    def __init__(self, value, m: int = 1, kind: str = "vector", label: str = "H"):
        super().__init__(m, kind, label)
        shape = (m, m) if kind == "matrix" else (m,)
        self.value = np.broadcast_to(np.asarray(value, dtype=np.float64), shape).copy()
        self.is_zero = not np.any(self.value)

    def evaluate(self, block, jet=None):
        return self.value

    def depends_on(self, var: str) -> bool:
        return False

    @property
    def jet_dependent(self) -> bool:
        return False

    def partial(self, var, block, jet=None):
        return np.zeros(self.value.shape)

    def second_partial(self, var1, var2, block, jet=None):
        return np.zeros(self.value.shape)


def zero_matrix(m: int = 1, label: str = "A") -> ConstantEvaluator:
    return ConstantEvaluator(0.0, m, "matrix", label)


def zero_vector(m: int = 1, label: str = "f") -> ConstantEvaluator:
    return ConstantEvaluator(0.0, m, "vector", label)


class ExpressionEvaluator(Evaluator):
    """Scalar (m=1) evaluator backed by an :class:`ExpressionFunction`."""

    def __init__(self, fn: Union[ExpressionFunction, str, Expression], kind: str = "vector", label: str = "H"):
        if not isinstance(fn, ExpressionFunction):
            fn = ExpressionFunction(fn, label=label)
        super().__init__(1, kind, label)
        self.fn = fn
        self.is_zero = fn.constant == 0.0

    def _wrap(self, value) -> np.ndarray:
        value = np.asarray(value, dtype=np.float64)
        return value[..., None, None] if self.kind == "matrix" else value[..., None]

    def evaluate(self, block, jet=None):
        return self._wrap(self.fn.value(jet_bindings(block, jet)))

    def depends_on(self, var: str) -> bool:
        return self.fn.depends_on(var)

    @property
    def jet_dependent(self) -> bool:
        return any(parse_index_name(v) is not None for v in self.fn.vars)

    def partial(self, var, block, jet=None):
        return self._wrap(self.fn.partial(var, jet_bindings(block, jet)))

    def second_partial(self, var1, var2, block, jet=None):
        return self._wrap(self.fn.second_partial(var1, var2, jet_bindings(block, jet)))


class CallableEvaluator(Evaluator):
    """Wrap a plain callable ``fn(block, jet)``; partial derivatives are numeric."""

    def __init__(self, fn: Callable, m: int = 1, kind: str = "vector", label: str = "H",
                 jet_dependent: bool = True):
        super().__init__(m, kind, label)
        self.fn = fn
        self._jet_dependent = jet_dependent

    def evaluate(self, block, jet=None):
        return np.asarray(self.fn(block, jet), dtype=np.float64)

    @property
    def jet_dependent(self) -> bool:
        return self._jet_dependent


# ---------------------------------------------------------------------------
# Initial data
# ---------------------------------------------------------------------------

class InitialData:
    """Initial data ``g(t, y)`` with optional analytic spatial derivatives and ``g_t``.

    ``value(t, y)`` returns an array broadcasting to ``(*t.shape[:-1], N, m)``.
    Missing spatial derivatives fall back to stencils on the grid; a missing
    ``g_t`` falls back to a central difference in ``t``.
    """

    def __init__(self, value: Callable, m: int = 1,
                 derivatives: Optional[Dict[MultiIndex, Callable]] = None,
                 time_derivative: Optional[Callable] = None, label: str = "g"):
        self._value = value
        self.m = m
        self.derivatives = dict(derivatives or {})
        self._time_derivative = time_derivative
        self.label = label

    @classmethod
    def from_expressions(cls, g: Union[str, Expression], g_t: Optional[Union[str, Expression]] = None,
                         derivatives: Optional[Mapping[str, Union[str, Expression]]] = None,
                         label: str = "g") -> "InitialData":
        g_expr = as_expression(g)
        derivs = {}
        for name, text in (derivatives or {}).items():
            parsed = parse_index_name(name)
            if parsed is None or parsed[1]:
                raise MissingDerivativeCallback(f"'{name}' is not a local derivative name", "systems::InitialData")
            derivs[parsed[0]] = _scalar_callable(as_expression(text))
        time_derivative = _scalar_callable(as_expression(g_t)) if g_t is not None else None
        obj = cls(_scalar_callable(g_expr), 1, derivs, time_derivative, label)
        obj.expressions = {"g": g_expr}
        return obj

    @classmethod
    def from_samples(cls, values: np.ndarray, grid: TriangleGrid, label: str = "g") -> "InitialData":
        """Initial data known only at the grid nodes ``t_i``; ``t`` is snapped to the nearest node."""
        values = np.asarray(values, dtype=np.float64)

        def value(t, y):
            t_arr = np.asarray(t, dtype=np.float64)
            idx = np.rint((t_arr[..., 0] if t_arr.ndim else t_arr) / grid.dtau).astype(np.int64)
            return values[np.clip(idx, 0, grid.n_tau)]

        return cls(value, values.shape[-1], {}, None, label)

    @classmethod
    def constant(cls, value: float = 0.0, m: int = 1) -> "InitialData":
        vec = np.full(m, float(value))
        return cls(lambda t, y: vec, m, {}, lambda t, y: np.zeros(m))

    def value(self, t, y) -> np.ndarray:
        return np.asarray(self._value(t, y), dtype=np.float64)

    def at(self, t, grid: TriangleGrid) -> np.ndarray:
        """``g(t, ·)`` on the grid with shape ``(*t.shape[:-1], N, m)``; scalar *t* gives ``(N, m)``."""
        t_arr = np.asarray(t, dtype=np.float64)
        lead = t_arr.shape[:-1] if t_arr.ndim else ()
        return np.broadcast_to(self.value(t, grid.y), lead + (grid.n_spatial, self.m)).copy()

    def sample(self, grid: TriangleGrid) -> np.ndarray:
        """``g(t_i, ·)`` for every ``i``, shape ``(n_tau+1, N, m)``."""
        return self.at(grid.t_nodes[:, None], grid)

    def derivative(self, I: MultiIndex, t, grid: TriangleGrid) -> np.ndarray:
        I = tuple(sorted(I))
        if len(I) == 0:
            return self.at(t, grid)
        if I in self.derivatives:
            t_arr = np.asarray(t, dtype=np.float64)
            lead = t_arr.shape[:-1] if t_arr.ndim else ()
            return np.broadcast_to(np.asarray(self.derivatives[I](t, grid.y), dtype=np.float64),
                                   lead + (grid.n_spatial, self.m)).copy()
        return stencil_apply(self.at(t, grid), I, grid)

    def time_derivative(self, t, grid: TriangleGrid) -> np.ndarray:
        t_arr = np.asarray(t, dtype=np.float64)
        lead = t_arr.shape[:-1] if t_arr.ndim else ()
        if self._time_derivative is not None:
            out = self._time_derivative(t, grid.y)
        else:
            _notice_fd(self.label, "t")
            h = float(fd_step(np.max(np.abs(t_arr)) if t_arr.size else 0.0))
            out = (self.value(t_arr + h, grid.y) - self.value(t_arr - h, grid.y)) / (2.0 * h)
        return np.broadcast_to(np.asarray(out, dtype=np.float64), lead + (grid.n_spatial, self.m)).copy()

    def scaled(self, c: float) -> "InitialData":
        derivs = {I: (lambda fn: (lambda t, y: c * np.asarray(fn(t, y))))(fn) for I, fn in self.derivatives.items()}
        g_t = None
        if self._time_derivative is not None:
            g_t = lambda t, y: c * np.asarray(self._time_derivative(t, y))
        return InitialData(lambda t, y: c * self.value(t, y), self.m, derivs, g_t, self.label)


def _scalar_callable(expr: Expression) -> Callable:
    def fn(t, y):
        b = {"t": t}
        for k in range(y.shape[0]):
            b[f"y{k + 1}"] = y[k]
        return np.asarray(evaluate(expr, b), dtype=np.float64)[..., None]

    fn.expression = expr
    return fn


def top_indices(d: int, r: int) -> Sequence[MultiIndex]:
    return multi_indices(d, 2 * r, 2 * r)
