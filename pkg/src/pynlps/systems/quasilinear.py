"""Quasilinear nonlocal systems.

``u_s = Σ_{|I|=2r} A^I(z) ∂_I u(t,s,y) + Σ_{|I|=2r} B^I(z) ∂_I u(s,s,y) + F(z)``
where ``z`` is the jet of ``u`` of order ``2r-1`` at both arguments.
"""
import logging
from typing import Callable, Dict, List, Mapping, Optional, Union

import numpy as np

from ..errors import InvalidParameter, MissingDerivativeCallback
from ..expr import Expression
from ..grid import Jet, MultiIndex, NodeBlock, index_name, multi_indices, parse_index_name
from .common import (
    CallableEvaluator,
    Evaluator,
    ExpressionEvaluator,
    ExpressionFunction,
    InitialData,
    apply_matrix,
    top_indices,
    zero_matrix,
    zero_vector,
)
from .linear import LinearSystemSpec, initial_data_from_terms

logger = logging.getLogger(__name__)

DerivativeCallback = Callable[[NodeBlock, Jet], np.ndarray]


class QuasilinearSystemSpec:
    """Coefficients ``A_top``, ``B_top`` and the lower-order part ``F_low`` as jet evaluators.

    ``derivatives`` optionally maps ``(label, var)`` (label ``A.q11``,
    ``B.q11`` or ``F``; var a jet identifier, ``t``, ``s`` or ``y<k>``) to an
    analytic callback; everything else is differentiated numerically.
    """

    kind = "quasilinear"

    def __init__(self, d: int, r: int, m: int,
                 A_top: Mapping[MultiIndex, Evaluator],
                 B_top: Mapping[MultiIndex, Evaluator],
                 F_low: Optional[Evaluator] = None,
                 g: Optional[InitialData] = None,
                 derivatives: Optional[Mapping[tuple, DerivativeCallback]] = None,
                 name: str = "quasilinear",
                 allow_fd: bool = True):
        self.d = d
        self.r = r
        self.m = m
        self.A_top: Dict[MultiIndex, Evaluator] = dict(A_top)
        self.B_top: Dict[MultiIndex, Evaluator] = dict(B_top)
        self.F_low = F_low if F_low is not None else zero_vector(m, "F")
        self.g = g if g is not None else InitialData.constant(0.0, m)
        self.derivatives = dict(derivatives or {})
        self.name = name
        self.allow_fd = allow_fd
        self.errors: List[dict] = []
        self.validate()

    @property
    def jet_order(self) -> int:
        return 2 * self.r - 1

    # ------------------------------------------------------------------
    # Constructors
    # ------------------------------------------------------------------
    @classmethod
    def from_linear(cls, spec: LinearSystemSpec) -> "QuasilinearSystemSpec":
        """A linear spec seen as a quasilinear one; lower-order terms move into ``F_low``."""
        top = set(top_indices(spec.d, spec.r))
        lower_A = {I: ev for I, ev in spec.A.items() if I not in top and not ev.is_zero}
        lower_B = {I: ev for I, ev in spec.B.items() if I not in top and not ev.is_zero}

        def f_low(block: NodeBlock, jet: Jet) -> np.ndarray:
            out = np.asarray(spec.f(block), dtype=np.float64)
            for I, ev in lower_A.items():
                out = out + apply_matrix(ev(block), jet.local[I])
            for I, ev in lower_B.items():
                out = out + apply_matrix(ev(block), jet.diagonal[I])
            return out

        F_low = CallableEvaluator(f_low, spec.m, "vector", "F", jet_dependent=bool(lower_A or lower_B))
        return cls(spec.d, spec.r, spec.m,
                   {I: spec.A[I] for I in top}, {I: spec.B[I] for I in top},
                   F_low, spec.g, name=spec.name)

    @classmethod
    def from_terms(cls, terms: Mapping[str, Union[str, float, Expression]], d: int = 1, r: int = 1,
                   name: str = "quasilinear") -> "QuasilinearSystemSpec":
        """Scalar spec from ``A.<top>``, ``B.<top>``, ``F`` and ``g`` expression strings."""
        top = set(top_indices(d, r))
        A: Dict[MultiIndex, Evaluator] = {}
        B: Dict[MultiIndex, Evaluator] = {}
        F_low = None
        g_terms = {}
        for key, text in terms.items():
            if key.startswith(("A.", "B.")):
                parsed = parse_index_name(key[2:])
                if parsed is None or parsed[1] or parsed[0] not in top:
                    raise InvalidParameter(f"'{key}' is not a top-order coefficient", "systems::from_terms")
                target = A if key[0] == "A" else B
                target[parsed[0]] = ExpressionEvaluator(ExpressionFunction(text, label=key), "matrix", key)
            elif key == "F":
                F_low = ExpressionEvaluator(ExpressionFunction(text, label="F"), "vector", "F")
            elif key in ("g", "g_t") or key.startswith("g.d_"):
                g_terms[key] = text
            else:
                raise InvalidParameter(f"unknown term '{key}' for a quasilinear problem", "systems::from_terms")
        A = {I: A.get(I, zero_matrix(1, f"A.{index_name(I)}")) for I in sorted(top)}
        B = {I: B.get(I, zero_matrix(1, f"B.{index_name(I)}")) for I in sorted(top)}
        return cls(d, r, 1, A, B, F_low, initial_data_from_terms(g_terms), name=name)

    # ------------------------------------------------------------------
    # Public helpers
    # ------------------------------------------------------------------
    def isvalid(self) -> bool:
        return not self.errors

    def validate(self) -> List[dict]:
        """Top-order tables must cover exactly ``|I| = 2r``; evaluators may read jets up to ``2r-1``."""
        errors: List[dict] = []
        top = set(top_indices(self.d, self.r))
        for label, table in (("A_top", self.A_top), ("B_top", self.B_top)):
            if set(table) != top:
                errors.append({"type": "top_order_mismatch", "coefficient": label,
                               "expected": sorted(index_name(I) for I in top),
                               "found": sorted(index_name(I) for I in table)})
        allowed = {index_name(I) for I in multi_indices(self.d, self.jet_order)}
        allowed |= {index_name(I, True) for I in multi_indices(self.d, self.jet_order)}
        for label, ev in self._evaluators():
            fn = getattr(ev, "fn", None)
            if isinstance(fn, ExpressionFunction):
                too_high = sorted(v for v in fn.vars if parse_index_name(v) and v not in allowed)
                if too_high:
                    errors.append({"type": "jet_order_exceeded", "coefficient": label, "variables": too_high})
        self.errors = errors
        if errors:
            logger.warning("spec %s failed validation with %d error(s)", self.name, len(errors))
        return errors

    def require_valid(self, where: str) -> None:
        if self.errors:
            raise InvalidParameter(f"spec '{self.name}' is invalid: {self.errors}", where)

    def _evaluators(self):
        for I, ev in self.A_top.items():
            yield f"A.{index_name(I)}", ev
        for I, ev in self.B_top.items():
            yield f"B.{index_name(I)}", ev
        yield "F", self.F_low

    def evaluators(self) -> Dict[str, Evaluator]:
        return dict(self._evaluators())

    def jet_variables(self) -> List[str]:
        """Jet identifiers the coefficients may depend on (order ``2r-1``, both arguments)."""
        indices = multi_indices(self.d, self.jet_order)
        return [index_name(I) for I in indices] + [index_name(I, True) for I in indices]

    def partial(self, label: str, var: str, block: NodeBlock, jet: Jet) -> np.ndarray:
        """``∂H/∂var`` for ``H`` named by *label*; analytic callback first, then the evaluator's own rule."""
        callback = self.derivatives.get((label, var))
        if callback is not None:
            return np.asarray(callback(block, jet), dtype=np.float64)
        ev = self.evaluators()[label]
        if not self.allow_fd and ev.depends_on(var) and not _has_analytic(ev, var):
            raise MissingDerivativeCallback(f"no derivative callback for ∂{label}/∂{var}", "systems::partial")
        return ev.partial(var, block, jet)

    def second_partial(self, label: str, var1: str, var2: str, block: NodeBlock, jet: Jet) -> np.ndarray:
        ev = self.evaluators()[label]
        if not self.allow_fd and ev.depends_on(var1) and ev.depends_on(var2):
            raise MissingDerivativeCallback(f"no derivative callback for ∂²{label}/∂{var1}∂{var2}",
                                            "systems::second_partial")
        return ev.second_partial(var1, var2, block, jet)

    @property
    def jet_dependent(self) -> bool:
        return any(ev.jet_dependent and not ev.is_zero for _, ev in self._evaluators())

    def skeleton(self) -> dict:
        def describe(ev: Evaluator) -> str:
            if ev.is_zero:
                return "zero"
            return "jet-dependent" if ev.jet_dependent else "constant-in-jet"

        return {
            "kind": self.kind, "name": self.name, "d": self.d, "r": self.r, "m": self.m,
            "jet_order": self.jet_order,
            "A_top": {index_name(I): describe(ev) for I, ev in self.A_top.items()},
            "B_top": {index_name(I): describe(ev) for I, ev in self.B_top.items()},
            "F_low": describe(self.F_low),
        }

    def __repr__(self) -> str:
        return f"QuasilinearSystemSpec(name={self.name!r}, d={self.d}, r={self.r}, m={self.m})"


def _has_analytic(ev: Evaluator, var: str) -> bool:
    fn = getattr(ev, "fn", None)
    return isinstance(fn, ExpressionFunction) and var in fn.derivatives
