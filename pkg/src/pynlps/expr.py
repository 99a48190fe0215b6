"""Small arithmetic expression language used by config files and the preset catalog.

Grammar (whitespace-insensitive)::

    expr    := literal | identifier | identifier '(' expr ')' | '(' expr ')'
             | '-' expr | expr ('+'|'-'|'*'|'/'|'^') expr

Binding powers, loosest first: ``+ -`` < ``* /`` < unary ``-`` < ``^``
(right associative).  Functions: sin, cos, exp, log, tanh, sqrt, abs.

Evaluation works on floats and numpy arrays alike; the identifiers ``t``,
``s``, ``y1..yd`` and the jet names (``u``, ``p1``, ``q11``, ``n``, ``np1``,
``nq11``, ``c111`` ...) are supplied through a bindings mapping.  ``pi`` is
bound automatically unless overridden.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, Mapping, Optional, Set, Union

import numpy as np

from .errors import DomainError, ExpressionSyntaxError, UnboundIdentifier, UnknownFunction

Value = Union[float, np.ndarray]
Bindings = Mapping[str, Value]

MAX_SOURCE_BYTES = 64 * 1024

FUNCTIONS: Dict[str, Callable[[Value], Value]] = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "log": np.log,
    "tanh": np.tanh,
    "sqrt": np.sqrt,
    "abs": np.abs,
}

CONSTANTS: Dict[str, float] = {"pi": math.pi}

_EPS = float(np.finfo(float).eps)
_SYMMETRIC_NAME = re.compile(r"^n?[qc](\d+)$")


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------

class Expression:
    """Base class of expression tree nodes (immutable)."""

    def eval(self, bindings: Bindings) -> Value:
        return evaluate(self, bindings)

    def __str__(self) -> str:
        return to_string(self)


@dataclass(frozen=True)
class Number(Expression):
    value: float


@dataclass(frozen=True)
class Variable(Expression):
    name: str


@dataclass(frozen=True)
class Negate(Expression):
    operand: Expression


@dataclass(frozen=True)
class BinaryOp(Expression):
    op: str
    left: Expression
    right: Expression


@dataclass(frozen=True)
class Call(Expression):
    func: str
    arg: Expression


# ---------------------------------------------------------------------------
# Tokenizer
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^(),]))"
)


@dataclass
class _Token:
    kind: str
    text: str
    offset: int


def _byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


def _tokenize(text: str) -> Iterator[_Token]:
    pos = 0
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos >= len(text):
            yield _Token("end", "", _byte_offset(text, pos))
            return
        m = _TOKEN_RE.match(text, pos)
        if not m or m.end() == pos:
            raise ExpressionSyntaxError(f"unexpected character {text[pos]!r}", _byte_offset(text, pos))
        kind = m.lastgroup
        start = m.start(kind)
        yield _Token(kind, m.group(kind), _byte_offset(text, start))
        pos = m.end()


# ---------------------------------------------------------------------------
# Pratt parser
# ---------------------------------------------------------------------------

_LBP = {"+": 10, "-": 10, "*": 20, "/": 20, "^": 40}
_UNARY_RBP = 30


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.token = next(self.tokens)

    def advance(self) -> _Token:
        tok = self.token
        self.token = next(self.tokens)
        return tok

    def lbp(self, tok: _Token) -> int:
        if tok.kind == "op":
            return _LBP.get(tok.text, 0)
        return 0

    def expression(self, rbp: int = 0) -> Expression:
        tok = self.advance()
        left = self.nud(tok)
        while rbp < self.lbp(self.token):
            tok = self.advance()
            left = self.led(tok, left)
        return left

    def expect(self, text: str) -> None:
        if self.token.kind != "op" or self.token.text != text:
            found = self.token.text or "end of input"
            raise ExpressionSyntaxError(f"expected {text!r}, found {found!r}", self.token.offset)
        self.advance()

    def nud(self, tok: _Token) -> Expression:
        if tok.kind == "number":
            value = float(tok.text)
            if not math.isfinite(value):
                raise ExpressionSyntaxError(f"literal {tok.text!r} is not finite", tok.offset)
            return Number(value)
        if tok.kind == "ident":
            if self.token.kind == "op" and self.token.text == "(":
                if tok.text not in FUNCTIONS:
                    raise UnknownFunction(
                        f"unknown function '{tok.text}' at offset {tok.offset}", "expr::parse"
                    )
                self.advance()
                arg = self.expression()
                self.expect(")")
                return Call(tok.text, arg)
            _check_identifier(tok)
            return Variable(tok.text)
        if tok.kind == "op" and tok.text == "-":
            return Negate(self.expression(_UNARY_RBP))
        if tok.kind == "op" and tok.text == "(":
            inner = self.expression()
            self.expect(")")
            return inner
        found = tok.text or "end of input"
        raise ExpressionSyntaxError(f"unexpected {found!r}", tok.offset)

    def led(self, tok: _Token, left: Expression) -> Expression:
        if tok.text == "^":
            return BinaryOp("^", left, self.expression(_LBP["^"] - 1))
        return BinaryOp(tok.text, left, self.expression(_LBP[tok.text]))


def _check_identifier(tok: _Token) -> None:
    m = _SYMMETRIC_NAME.match(tok.text)
    if m:
        digits = m.group(1)
        if any(digits[k] > digits[k + 1] for k in range(len(digits) - 1)):
            raise ExpressionSyntaxError(
                f"non-canonical derivative name '{tok.text}' (indices must be nondecreasing)", tok.offset
            )


def parse(text: str) -> Expression:
    """Parse *text* into an :class:`Expression`."""
    if len(text.encode("utf-8")) > MAX_SOURCE_BYTES:
        raise ExpressionSyntaxError("expression longer than 64 KiB", MAX_SOURCE_BYTES)
    parser = _Parser(text)
    tree = parser.expression()
    if parser.token.kind != "end":
        raise ExpressionSyntaxError(f"unexpected {parser.token.text!r}", parser.token.offset)
    return tree


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def _snapshot(bindings: Bindings) -> Dict[str, object]:
    snap: Dict[str, object] = {}
    for k, v in bindings.items():
        if np.ndim(v) == 0:
            snap[k] = float(v)
        else:
            arr = np.asarray(v)
            snap[k] = f"array{arr.shape}[min={arr.min():.6g}, max={arr.max():.6g}]"
    return snap


def _finite(x: Value) -> bool:
    return bool(np.all(np.isfinite(x)))


def evaluate(expr: Expression, bindings: Bindings) -> Value:
    """Evaluate *expr*; the left operand is always evaluated before the right one."""
    with np.errstate(all="ignore"):
        return _eval(expr, bindings)


def _eval(node: Expression, b: Bindings) -> Value:
    if isinstance(node, Number):
        return node.value
    if isinstance(node, Variable):
        if node.name in b:
            return b[node.name]
        if node.name in CONSTANTS:
            return CONSTANTS[node.name]
        raise UnboundIdentifier(node.name)
    if isinstance(node, Negate):
        return -_eval(node.operand, b)
    if isinstance(node, Call):
        x = _eval(node.arg, b)
        if node.func == "log" and np.any(np.asarray(x) <= 0):
            raise DomainError(f"log of non-positive value (min {np.min(x):.6g})", _snapshot(b))
        if node.func == "sqrt" and np.any(np.asarray(x) < 0):
            raise DomainError(f"sqrt of negative value (min {np.min(x):.6g})", _snapshot(b))
        out = FUNCTIONS[node.func](x)
        if _finite(x) and not _finite(out):
            raise DomainError(f"{node.func} overflowed", _snapshot(b))
        return out
    if isinstance(node, BinaryOp):
        left = _eval(node.left, b)
        right = _eval(node.right, b)
        if node.op == "+":
            out = left + right
        elif node.op == "-":
            out = left - right
        elif node.op == "*":
            out = left * right
        elif node.op == "/":
            if np.any(np.asarray(right) == 0):
                raise DomainError("division by zero", _snapshot(b))
            out = left / right
        else:
            out = np.power(left, right) if isinstance(left, np.ndarray) or isinstance(right, np.ndarray) \
                else _scalar_power(left, right, b)
        if _finite(left) and _finite(right) and not _finite(out):
            raise DomainError(f"'{node.op}' left the real domain", _snapshot(b))
        return out
    raise TypeError(f"not an expression node: {node!r}")


def _scalar_power(base: float, exponent: float, b: Bindings) -> float:
    if base < 0 and not float(exponent).is_integer():
        raise DomainError("negative base with non-integer exponent", _snapshot(b))
    try:
        return float(np.power(float(base), float(exponent)))
    except ZeroDivisionError:
        raise DomainError("zero raised to a negative power", _snapshot(b)) from None


# ---------------------------------------------------------------------------
# Finite-difference derivatives
# ---------------------------------------------------------------------------

def fd_step(x: Value, scale: float = 1.0, power: float = 1.0 / 3.0) -> Value:
    """Step ``eps**power * max(|x|, scale)``, elementwise for arrays."""
    return _EPS ** power * np.maximum(np.abs(x), scale)


def derivative_fd(expr: Expression, var: str, bindings: Bindings, scale: float = 1.0) -> Value:
    """Central difference of *expr* in *var* with step ``eps^(1/3)·max(|x|, scale)``."""
    if var not in bindings:
        raise UnboundIdentifier(var, "expr::derivative_fd")
    x = bindings[var]
    h = fd_step(x, scale)
    plus = dict(bindings)
    minus = dict(bindings)
    plus[var] = x + h
    minus[var] = x - h
    return (evaluate(expr, plus) - evaluate(expr, minus)) / (2.0 * h)


def second_derivative_fd(expr: Expression, var1: str, var2: str, bindings: Bindings,
                         scale: float = 1.0) -> Value:
    """Second derivative by nested central differences with steps ``eps^(1/4)·max(|x|, scale)``."""
    for var in (var1, var2):
        if var not in bindings:
            raise UnboundIdentifier(var, "expr::second_derivative_fd")
    x1 = bindings[var1]
    h1 = fd_step(x1, scale, 0.25)
    if var1 == var2:
        plus = dict(bindings)
        minus = dict(bindings)
        plus[var1] = x1 + h1
        minus[var1] = x1 - h1
        return (evaluate(expr, plus) - 2.0 * evaluate(expr, bindings) + evaluate(expr, minus)) / (h1 * h1)
    x2 = bindings[var2]
    h2 = fd_step(x2, scale, 0.25)

    def at(d1: float, d2: float) -> Value:
        b = dict(bindings)
        b[var1] = x1 + d1 * h1
        b[var2] = x2 + d2 * h2
        return evaluate(expr, b)

    return (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * h1 * h2)


# ---------------------------------------------------------------------------
# Printing and tree utilities
# ---------------------------------------------------------------------------

def to_string(expr: Expression) -> str:
    """Canonical, fully parenthesized text; re-parses to an identical tree."""
    if isinstance(expr, Number):
        return repr(float(expr.value))
    if isinstance(expr, Variable):
        return expr.name
    if isinstance(expr, Negate):
        return f"(-{to_string(expr.operand)})"
    if isinstance(expr, Call):
        return f"{expr.func}({to_string(expr.arg)})"
    if isinstance(expr, BinaryOp):
        return f"({to_string(expr.left)} {expr.op} {to_string(expr.right)})"
    raise TypeError(f"not an expression node: {expr!r}")


def variables(expr: Expression) -> Set[str]:
    """Identifiers referenced by *expr* (constants included)."""
    if isinstance(expr, Variable):
        return {expr.name}
    if isinstance(expr, Negate):
        return variables(expr.operand)
    if isinstance(expr, Call):
        return variables(expr.arg)
    if isinstance(expr, BinaryOp):
        return variables(expr.left) | variables(expr.right)
    return set()


def substitute(expr: Expression, mapping: Mapping[str, Expression]) -> Expression:
    """Replace variables by expressions."""
    if isinstance(expr, Variable):
        return mapping.get(expr.name, expr)
    if isinstance(expr, Negate):
        return Negate(substitute(expr.operand, mapping))
    if isinstance(expr, Call):
        return Call(expr.func, substitute(expr.arg, mapping))
    if isinstance(expr, BinaryOp):
        return BinaryOp(expr.op, substitute(expr.left, mapping), substitute(expr.right, mapping))
    return expr


def as_expression(value: Union[str, float, int, Expression]) -> Expression:
    """Coerce catalog/config values (strings or numbers) to an Expression."""
    if isinstance(value, Expression):
        return value
    if isinstance(value, bool):
        raise ExpressionSyntaxError("booleans are not expressions", 0)
    if isinstance(value, (int, float)):
        return Number(float(value)) if value >= 0 else Negate(Number(-float(value)))
    return parse(str(value))


def is_constant(expr: Expression) -> Optional[float]:
    """The value of a variable-free expression, else ``None``."""
    if variables(expr) - set(CONSTANTS):
        return None
    return float(evaluate(expr, {}))
