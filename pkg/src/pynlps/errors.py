"""Exception hierarchy for pynlps.

Every error carries the ``module::op`` it was raised from and the CLI exit
code family it belongs to (1 validation, 2 solver, 3 verification gate).
"""
from __future__ import annotations

from typing import Any, Dict, Optional


class NLPSError(Exception):
    """Base class for all pynlps errors."""

    exit_code = 2

    def __init__(self, message: str, where: str = "pynlps::run"):
        super().__init__(message)
        self.message = message
        self.where = where

    @property
    def code(self) -> str:
        return type(self).__name__

    def error_line(self) -> str:
        """Single-line machine-parsable rendering used on standard error."""
        text = " ".join(str(self.message).split())
        return f"ERROR {self.code} {self.where} {text}"


# ---------------------------------------------------------------------------
# Validation family (exit 1)
# ---------------------------------------------------------------------------

class InputError(NLPSError):
    exit_code = 1


class InvalidParameter(InputError):
    pass


class UnsupportedOrder(InputError):
    pass


class IndexOutOfRange(InputError):
    pass


class InvalidAlpha(InputError):
    pass


class InvalidRegularityIndex(InputError):
    pass


class UnsupportedRegularityIndex(InputError):
    pass


class ExpressionSyntaxError(InputError):
    """Malformed expression text; ``offset`` is the byte offset of the fault."""

    def __init__(self, message: str, offset: int, where: str = "expr::parse"):
        super().__init__(f"{message} at offset {offset}", where)
        self.offset = offset


class UnknownFunction(InputError):
    pass


class UnboundIdentifier(InputError):
    def __init__(self, name: str, where: str = "expr::eval"):
        super().__init__(f"unbound identifier '{name}'", where)
        self.name = name


class UnknownPreset(InputError):
    pass


class MissingDerivativeCallback(InputError):
    pass


class UnsupportedMultiComponent(InputError):
    pass


class InvalidGridSequence(InputError):
    pass


class GridMismatch(InputError):
    pass


class NltfFormatError(InputError):
    pass


# ---------------------------------------------------------------------------
# Solver family (exit 2)
# ---------------------------------------------------------------------------

class SolverError(NLPSError):
    exit_code = 2


class CflViolation(SolverError):
    pass


class NonFiniteDetected(SolverError):
    def __init__(self, i: int, j: int, where: str):
        super().__init__(f"non-finite value first seen at node (i={i}, j={j})", where)
        self.node = (i, j)


class EvaluatorFailure(SolverError):
    pass


class DomainError(SolverError):
    """Evaluation left the domain of a function; ``snapshot`` holds the bindings."""

    def __init__(self, message: str, snapshot: Optional[Dict[str, Any]] = None,
                 where: str = "expr::eval"):
        snap = snapshot or {}
        shown = ", ".join(f"{k}={v!r}" for k, v in sorted(snap.items()))
        super().__init__(f"{message} [{shown}]" if shown else message, where)
        self.snapshot = snap


class BallExit(SolverError):
    pass


class MaxIterExceeded(SolverError):
    pass


# ---------------------------------------------------------------------------
# Verification family (exit 3)
# ---------------------------------------------------------------------------

class VerificationError(NLPSError):
    exit_code = 3


class SelfCheckFailed(VerificationError):
    pass


class GateFailure(VerificationError):
    pass
