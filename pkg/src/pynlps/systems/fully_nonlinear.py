"""Fully-nonlinear scalar systems ``u_s = F(t, s, y, jet(t,s,y), jet(s,s,y))``."""
import logging
from typing import Dict, List, Mapping, Optional, Union

import numpy as np

from ..errors import InvalidParameter, MissingDerivativeCallback
from ..expr import Expression
from ..grid import Jet, NodeBlock, index_name, multi_indices, parse_index_name
from .common import Evaluator, ExpressionEvaluator, ExpressionFunction, InitialData
from .linear import initial_data_from_terms

logger = logging.getLogger(__name__)


class FullyNonlinearSpec:
    """Scalar fully-nonlinear spec.

    ``F`` is a vector evaluator of ``(block, jet)`` with jet order ``2r``.
    Its ``partial(var, block, jet)`` supplies ``F_{y_k}``, ``F_s``, ``F_t``,
    ``F_{q_I}`` (local entries) and ``F_{n_I}`` (diagonal entries).
    """

    kind = "fully_nonlinear"

    def __init__(self, d: int, r: int, F: Evaluator, g: Optional[InitialData] = None,
                 m: int = 1, name: str = "fully_nonlinear", allow_fd: bool = True):
        self.d = d
        self.r = r
        self.m = m
        self.F = F
        self.g = g if g is not None else InitialData.constant(0.0, m)
        self.name = name
        self.allow_fd = allow_fd
        self.errors: List[dict] = []
        self.validate()

    @property
    def jet_order(self) -> int:
        return 2 * self.r

    @classmethod
    def from_terms(cls, terms: Mapping[str, Union[str, float, Expression]], d: int = 1, r: int = 1,
                   name: str = "fully_nonlinear", allow_fd: bool = True) -> "FullyNonlinearSpec":
        """Spec from ``F``, ``F.d_<var>``, ``g``, ``g_t``, ``g.d_<jet>`` expression strings."""
        if "F" not in terms:
            raise InvalidParameter("fully-nonlinear problem needs an 'F' term", "systems::from_terms")
        derivs: Dict[str, Union[str, float, Expression]] = {}
        g_terms = {}
        for key, text in terms.items():
            if key == "F":
                continue
            if key.startswith("F.d_"):
                derivs[key[len("F.d_"):]] = text
            elif key in ("g", "g_t") or key.startswith("g.d_"):
                g_terms[key] = text
            else:
                raise InvalidParameter(f"unknown term '{key}' for a fully-nonlinear problem",
                                       "systems::from_terms")
        fn = ExpressionFunction(terms["F"], derivs, label="F", allow_fd=allow_fd)
        F = ExpressionEvaluator(fn, "vector", "F")
        return cls(d, r, F, initial_data_from_terms(g_terms), 1, name, allow_fd)

    def isvalid(self) -> bool:
        return not self.errors

    def validate(self) -> List[dict]:
        errors: List[dict] = []
        fn = getattr(self.F, "fn", None)
        if isinstance(fn, ExpressionFunction):
            allowed = set(self.jet_variables())
            spatial = {f"y{k + 1}" for k in range(self.d)}
            for v in sorted(fn.vars):
                parsed = parse_index_name(v)
                if parsed is not None and v not in allowed:
                    errors.append({"type": "jet_order_exceeded", "variable": v})
                elif parsed is None and v not in spatial | {"t", "s", "pi"}:
                    errors.append({"type": "unknown_variable", "variable": v})
        self.errors = errors
        if errors:
            logger.warning("spec %s failed validation with %d error(s)", self.name, len(errors))
        return errors

    def require_valid(self, where: str) -> None:
        if self.errors:
            raise InvalidParameter(f"spec '{self.name}' is invalid: {self.errors}", where)

    def jet_variables(self) -> List[str]:
        indices = multi_indices(self.d, self.jet_order)
        return [index_name(I) for I in indices] + [index_name(I, True) for I in indices]

    def top_variables(self) -> List[str]:
        indices = multi_indices(self.d, self.jet_order, self.jet_order)
        return [index_name(I) for I in indices] + [index_name(I, True) for I in indices]

    def depends_on(self, var: str) -> bool:
        return self.F.depends_on(var)

    def partial(self, var: str, block: NodeBlock, jet: Jet) -> np.ndarray:
        fn = getattr(self.F, "fn", None)
        if not self.allow_fd and isinstance(fn, ExpressionFunction) and var not in fn.derivatives \
                and fn.depends_on(var):
            raise MissingDerivativeCallback(f"no derivative callback for ∂F/∂{var}", "systems::partial")
        return self.F.partial(var, block, jet)

    def second_partial(self, var1: str, var2: str, block: NodeBlock, jet: Jet) -> np.ndarray:
        return self.F.second_partial(var1, var2, block, jet)

    def skeleton(self) -> dict:
        return {"kind": self.kind, "name": self.name, "d": self.d, "r": self.r, "m": self.m,
                "jet_order": self.jet_order,
                "depends_on": [v for v in self.jet_variables() if self.depends_on(v)]}

    def __repr__(self) -> str:
        return f"FullyNonlinearSpec(name={self.name!r}, d={self.d}, r={self.r})"
