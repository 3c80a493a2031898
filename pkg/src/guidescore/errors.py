"""Error taxonomy shared by every engine module.

Every failure carries a stable machine-readable ``code`` (used by the CLI to
map onto exit codes and by tests) plus a human-readable message and optional
location details.
"""

from __future__ import annotations

from typing import Any


class EngineError(Exception):
    """Base class for all engine failures."""

    code = "E_GENERIC"

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details = details

    def __str__(self) -> str:
        if self.details:
            extras = ", ".join(f"{k}={v!r}" for k, v in sorted(self.details.items()))
            return f"[{self.code}] {self.message} ({extras})"
        return f"[{self.code}] {self.message}"


# --- document / registry loading ---

class SyntaxError_(EngineError):
    """Malformed input document (JSON or schema shape), position-annotated."""
    code = "E_SYNTAX"


class DuplicateIdError(EngineError):
    code = "E_DUP_ID"


class BadIdError(EngineError):
    code = "E_BAD_ID"


class ClauseExpressionError(EngineError):
    """Embedded DSL failed to parse; names the clause and character offset."""
    code = "E_EXPR"


class NotFoundError(EngineError):
    code = "E_NOT_FOUND"


class NoJurisdictionError(EngineError):
    code = "E_NO_JURISDICTION"


# --- expression language ---

class ExpressionParseError(EngineError):
    """Carries the character offset and the token kinds that were expected."""
    code = "E_PARSE"

    def __init__(self, message: str, offset: int, expected: tuple[str, ...] = ()):
        super().__init__(message, offset=offset, expected=expected)
        self.offset = offset
        self.expected = expected


class UnknownFunctionError(EngineError):
    code = "E_UNKNOWN_FUNC"


class UnitMismatchError(EngineError):
    code = "E_UNIT"


class TypeMismatchError(EngineError):
    code = "E_TYPE"


# --- scoring ---

class VerdictMissingError(EngineError):
    code = "E_VERDICT_MISSING"


class EmptyRunError(EngineError):
    code = "E_EMPTY_RUN"


# --- overrides ---

class DuplicateReasonError(EngineError):
    code = "E_DUP_REASON"


class BadPenaltyError(EngineError):
    code = "E_BAD_PENALTY"


class PositiveBaseError(EngineError):
    code = "E_POSITIVE_BASE"


class HashChainError(EngineError):
    code = "E_HASH_CHAIN"


# --- lifecycle ---

class UnknownIdError(EngineError):
    code = "E_UNKNOWN_ID"


class BadTierError(EngineError):
    code = "E_BAD_TIER"


# --- audits ---

class EmptyInputError(EngineError):
    code = "E_EMPTY"


class BadRateError(EngineError):
    code = "E_BAD_RATE"


class NoGroupsError(EngineError):
    code = "E_NO_GROUPS"


class BadTargetsError(EngineError):
    code = "E_BAD_TARGETS"


# --- service ---

class PortInUseError(EngineError):
    code = "E_PORT_IN_USE"
