import logging
from typing import Dict, List, Mapping, Optional, Union

from ..errors import InvalidParameter
from ..expr import Expression
from ..grid import MultiIndex, index_name, is_canonical, multi_indices, parse_index_name
from .common import (
    ConstantEvaluator,
    Evaluator,
    ExpressionEvaluator,
    ExpressionFunction,
    InitialData,
    zero_matrix,
    zero_vector,
)

logger = logging.getLogger(__name__)


class LinearSystemSpec:
    """Nonlocal linear system ``u_s = Σ A^I ∂_I u(t,s,y) + Σ B^I ∂_I u(s,s,y) + f``.

    ``A`` and ``B`` map every canonical multi-index with ``|I| <= 2r`` to a
    matrix evaluator ``block -> (.., m, m)``; ``f`` is a vector evaluator and
    ``g`` the initial data at ``s = 0``.
    """

    kind = "linear"

    def __init__(self, d: int, r: int, m: int,
                 A: Mapping[MultiIndex, Evaluator],
                 B: Mapping[MultiIndex, Evaluator],
                 f: Optional[Evaluator] = None,
                 g: Optional[InitialData] = None,
                 name: str = "linear"):
        self.d = d
        self.r = r
        self.m = m
        self.A: Dict[MultiIndex, Evaluator] = {tuple(I): v for I, v in A.items()}
        self.B: Dict[MultiIndex, Evaluator] = {tuple(I): v for I, v in B.items()}
        self.f = f if f is not None else zero_vector(m)
        self.g = g if g is not None else InitialData.constant(0.0, m)
        self.name = name
        self.errors: List[dict] = []
        self.validate()

    # ------------------------------------------------------------------
    # Constructors
    # ------------------------------------------------------------------
    @classmethod
    def from_coefficients(cls, d: int, r: int, m: int,
                          A: Optional[Mapping[MultiIndex, Evaluator]] = None,
                          B: Optional[Mapping[MultiIndex, Evaluator]] = None,
                          f: Optional[Evaluator] = None, g: Optional[InitialData] = None,
                          name: str = "linear") -> "LinearSystemSpec":
        """Fill every entry not given with a zero evaluator."""
        A = dict(A or {})
        B = dict(B or {})
        full_A = {I: A.get(I, zero_matrix(m, f"A.{index_name(I)}")) for I in multi_indices(d, 2 * r)}
        full_B = {I: B.get(I, zero_matrix(m, f"B.{index_name(I)}")) for I in multi_indices(d, 2 * r)}
        extra = (set(A) | set(B)) - set(full_A)
        if extra:
            raise InvalidParameter(f"coefficients for unsupported multi-indices {sorted(extra)}",
                                   "systems::LinearSystemSpec")
        return cls(d, r, m, full_A, full_B, f, g, name)

    @classmethod
    def from_terms(cls, terms: Mapping[str, Union[str, float, Expression]], d: int = 1, r: int = 1,
                   name: str = "linear") -> "LinearSystemSpec":
        """Build a scalar spec from expression strings keyed ``A.q11``, ``B.q11``, ``f``, ``g``, ``g_t``, ``g.d_p1``."""
        A: Dict[MultiIndex, Evaluator] = {}
        B: Dict[MultiIndex, Evaluator] = {}
        f = None
        g_terms = {}
        for key, text in terms.items():
            if key.startswith(("A.", "B.")):
                I = _local_index(key[2:], key)
                if len(I) > 2 * r or any(a >= d for a in I):
                    raise InvalidParameter(f"term '{key}' outside |I| <= 2r for d={d}", "systems::from_terms")
                target = A if key[0] == "A" else B
                target[I] = ExpressionEvaluator(ExpressionFunction(text, label=key), "matrix", key)
            elif key == "f":
                f = ExpressionEvaluator(ExpressionFunction(text, label="f"), "vector", "f")
            elif key in ("g", "g_t") or key.startswith("g.d_"):
                g_terms[key] = text
            else:
                raise InvalidParameter(f"unknown term '{key}' for a linear problem", "systems::from_terms")
        g = initial_data_from_terms(g_terms)
        return cls.from_coefficients(d, r, 1, A, B, f, g, name)

    # ------------------------------------------------------------------
    # Public helpers
    # ------------------------------------------------------------------
    def isvalid(self) -> bool:
        """Return ``True`` if the last :pyfunc:`validate` finished without errors."""
        return not self.errors

    def validate(self) -> List[dict]:
        """Check that every ``|I| <= 2r`` has an A and a B entry of the right kind."""
        errors: List[dict] = []
        expected = set(multi_indices(self.d, 2 * self.r))
        for label, table in (("A", self.A), ("B", self.B)):
            missing = expected - set(table)
            if missing:
                errors.append({"type": "missing_entries", "coefficient": label,
                               "indices": sorted(index_name(I) for I in missing)})
            bad = [I for I in table if I not in expected or not is_canonical(I)]
            if bad:
                errors.append({"type": "invalid_indices", "coefficient": label, "indices": sorted(bad)})
            for I, ev in table.items():
                if getattr(ev, "kind", "matrix") != "matrix":
                    errors.append({"type": "not_a_matrix", "coefficient": f"{label}.{index_name(I)}"})
        self.errors = errors
        if errors:
            logger.warning("spec %s failed validation with %d error(s)", self.name, len(errors))
        return errors

    def require_valid(self, where: str) -> None:
        if self.errors:
            raise InvalidParameter(f"spec '{self.name}' is incomplete: {self.errors}", where)

    @property
    def b_is_zero(self) -> bool:
        return all(ev.is_zero for ev in self.B.values())

    def with_forcing(self, f: Evaluator, name: Optional[str] = None) -> "LinearSystemSpec":
        return LinearSystemSpec(self.d, self.r, self.m, self.A, self.B, f, self.g, name or self.name)

    def with_data(self, f: Optional[Evaluator] = None, g: Optional[InitialData] = None,
                  name: Optional[str] = None) -> "LinearSystemSpec":
        return LinearSystemSpec(self.d, self.r, self.m, self.A, self.B,
                                f if f is not None else self.f, g if g is not None else self.g,
                                name or self.name)

    def without_diagonal(self) -> "LinearSystemSpec":
        B = {I: zero_matrix(self.m, f"B.{index_name(I)}") for I in self.B}
        return LinearSystemSpec(self.d, self.r, self.m, self.A, B, self.f, self.g, self.name + "_local")

    def skeleton(self) -> dict:
        def describe(ev: Evaluator) -> str:
            if ev.is_zero:
                return "zero"
            if isinstance(ev, ConstantEvaluator) or getattr(getattr(ev, "fn", None), "constant", None) is not None:
                return "constant"
            return "variable"

        return {
            "kind": self.kind, "name": self.name, "d": self.d, "r": self.r, "m": self.m,
            "A": {index_name(I): describe(ev) for I, ev in self.A.items() if not ev.is_zero},
            "B": {index_name(I): describe(ev) for I, ev in self.B.items() if not ev.is_zero},
        }

    def __repr__(self) -> str:
        return f"LinearSystemSpec(name={self.name!r}, d={self.d}, r={self.r}, m={self.m})"


def _local_index(name: str, key: str) -> MultiIndex:
    parsed = parse_index_name(name)
    if parsed is None or parsed[1]:
        raise InvalidParameter(f"'{key}' does not name a local derivative", "systems::from_terms")
    return parsed[0]


def initial_data_from_terms(terms: Mapping[str, Union[str, float, Expression]]) -> InitialData:
    """``g``, ``g_t`` and ``g.d_<jet>`` terms to :class:`InitialData` (``g`` defaults to 0)."""
    derivs = {k[len("g.d_"):]: v for k, v in terms.items() if k.startswith("g.d_")}
    return InitialData.from_expressions(terms.get("g", 0.0), terms.get("g_t"), derivs)
