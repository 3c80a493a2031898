"""Predicate language for clause applicability and satisfaction conditions.

Grammar (EBNF)::

    expr    := or
    or      := and ("or" and)*
    and     := unary ("and" unary)*
    unary   := "not" unary | cmp
    cmp     := operand (CMPOP operand)?
    operand := literal | call | "(" expr ")"
    call    := IDENT "(" (arg ("," arg)*)? ")"
    literal := NUMBER UNIT? | STRING | "true" | "false"

Identifiers match ``[a-z_][a-z0-9_.]*``; strings are double-quoted with
backslash escapes. Parsing yields flattened n-ary And/Or nodes, so the
canonical formatter round-trips structurally: parse(format(e)) == e.

Evaluation is three-valued (Kleene): a missing key under value(), patient(),
context() or formulary() makes any enclosing comparison Unknown, while
exists() is always decidable. Number comparisons require identical unit tags;
unit or type mismatches abort with E_UNIT / E_TYPE rather than degrading to
Unknown.
"""

from __future__ import annotations

import enum
import re
import unicodedata
from dataclasses import dataclass, field

from .errors import (
    ExpressionParseError,
    SyntaxError_,
    TypeMismatchError,
    UnitMismatchError,
    UnknownFunctionError,
)

UNITS = frozenset({"mg", "g", "ml", "days", "months", "years", "doses"})

FORMULARY_STATUSES = frozenset({"available", "shortage", "unavailable"})

# name -> arity; args are dotted keys, except jurisdiction() which takes none
FUNCTIONS: dict[str, int] = {
    "exists": 1,
    "value": 1,
    "patient": 1,
    "context": 1,
    "formulary": 1,
    "jurisdiction": 0,
}

KEYWORDS = frozenset({"and", "or", "not", "true", "false"})

CMP_OPS = ("==", "!=", "<=", ">=", "<", ">")


class TriState(enum.Enum):
    """Kleene three-valued truth."""

    TRUE = "true"
    FALSE = "false"
    UNKNOWN = "unknown"

    @staticmethod
    def of(b: bool) -> "TriState":
        return TriState.TRUE if b else TriState.FALSE

    def negate(self) -> "TriState":
        if self is TriState.UNKNOWN:
            return self
        return TriState.of(self is TriState.FALSE)


def kleene_and(a: TriState, b: TriState) -> TriState:
    if a is TriState.FALSE or b is TriState.FALSE:
        return TriState.FALSE
    if a is TriState.UNKNOWN or b is TriState.UNKNOWN:
        return TriState.UNKNOWN
    return TriState.TRUE


def kleene_or(a: TriState, b: TriState) -> TriState:
    if a is TriState.TRUE or b is TriState.TRUE:
        return TriState.TRUE
    if a is TriState.UNKNOWN or b is TriState.UNKNOWN:
        return TriState.UNKNOWN
    return TriState.FALSE


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Literal:
    value: bool | str | float
    unit: str | None = None  # only meaningful on numbers


@dataclass(frozen=True)
class FunctionCall:
    name: str
    args: tuple[str, ...] = ()


@dataclass(frozen=True)
class Compare:
    op: str
    left: "Operand"
    right: "Operand"


@dataclass(frozen=True)
class Not:
    operand: "Expression"


@dataclass(frozen=True)
class And:
    children: tuple["Expression", ...]  # len >= 2, no child is And


@dataclass(frozen=True)
class Or:
    children: tuple["Expression", ...]  # len >= 2, no child is Or


Operand = Literal | FunctionCall
Expression = Literal | FunctionCall | Compare | Not | And | Or


# ---------------------------------------------------------------------------
# Lexer
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>\d+(?:\.\d+)?)
  | (?P<ident>[a-z_][a-z0-9_.]*)
  | (?P<string>"(?:\\.|[^"\\])*")
  | (?P<cmp>==|!=|<=|>=|<|>)
  | (?P<lparen>\()
  | (?P<rparen>\))
  | (?P<comma>,)
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str  # number | ident | keyword | string | cmp | lparen | rparen | comma | eof
    text: str
    offset: int


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ExpressionParseError(
                f"unexpected character {text[pos]!r}", offset=pos, expected=("token",)
            )
        pos = m.end()
        kind = m.lastgroup
        if kind == "ws":
            continue
        value = m.group()
        if kind == "ident" and value in KEYWORDS:
            kind = "keyword"
        tokens.append(_Token(kind, value, m.start()))
    tokens.append(_Token("eof", "", len(text)))
    return tokens


def _unescape(raw: str) -> str:
    # raw includes the surrounding quotes
    out: list[str] = []
    i = 1
    while i < len(raw) - 1:
        ch = raw[i]
        if ch == "\\":
            i += 1
            out.append(raw[i])
        else:
            out.append(ch)
        i += 1
    return "".join(out)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, message: str, tok: _Token, expected: tuple[str, ...]) -> "ExpressionParseError":
        # EOF carries offset len(text); clamp into the text so errors always
        # point at a real character.
        offset = min(tok.offset, max(0, len(self.text) - 1))
        return ExpressionParseError(message, offset=offset, expected=expected)

    def parse(self) -> Expression:
        expr = self.parse_or()
        tok = self.peek()
        if tok.kind != "eof":
            raise self.fail(f"unexpected token {tok.text!r}", tok, ("end of input",))
        return expr

    def parse_or(self) -> Expression:
        children = [self.parse_and()]
        while self.peek().kind == "keyword" and self.peek().text == "or":
            self.advance()
            children.append(self.parse_and())
        if len(children) == 1:
            return children[0]
        flat: list[Expression] = []
        for c in children:
            flat.extend(c.children if isinstance(c, Or) else (c,))
        return Or(tuple(flat))

    def parse_and(self) -> Expression:
        children = [self.parse_unary()]
        while self.peek().kind == "keyword" and self.peek().text == "and":
            self.advance()
            children.append(self.parse_unary())
        if len(children) == 1:
            return children[0]
        flat: list[Expression] = []
        for c in children:
            flat.extend(c.children if isinstance(c, And) else (c,))
        return And(tuple(flat))

    def parse_unary(self) -> Expression:
        tok = self.peek()
        if tok.kind == "keyword" and tok.text == "not":
            self.advance()
            return Not(self.parse_unary())
        return self.parse_cmp()

    def parse_cmp(self) -> Expression:
        left = self.parse_operand()
        tok = self.peek()
        if tok.kind != "cmp":
            return left
        op_tok = self.advance()
        right = self.parse_operand()
        for side in (left, right):
            if not isinstance(side, (Literal, FunctionCall)):
                raise self.fail(
                    "comparison operands must be literals or calls, not boolean expressions",
                    op_tok,
                    ("literal", "call"),
                )
        return Compare(op_tok.text, left, right)

    def parse_operand(self) -> Expression:
        tok = self.peek()
        if tok.kind == "number":
            self.advance()
            value = float(tok.text)
            unit = None
            nxt = self.peek()
            if nxt.kind == "ident" and nxt.text in UNITS:
                self.advance()
                unit = nxt.text
            return Literal(value, unit)
        if tok.kind == "string":
            self.advance()
            return Literal(_unescape(tok.text))
        if tok.kind == "keyword" and tok.text in ("true", "false"):
            self.advance()
            return Literal(tok.text == "true")
        if tok.kind == "ident":
            return self.parse_call()
        if tok.kind == "lparen":
            self.advance()
            inner = self.parse_or()
            closer = self.peek()
            if closer.kind != "rparen":
                raise self.fail("expected ')'", closer, (")",))
            self.advance()
            return inner
        raise self.fail(
            f"expected an operand, got {tok.text or 'end of input'!r}",
            tok,
            ("number", "string", "identifier", "true", "false", "("),
        )

    def parse_call(self) -> FunctionCall:
        name_tok = self.advance()
        name = name_tok.text
        if name not in FUNCTIONS:
            raise UnknownFunctionError(
                f"unknown function {name!r}",
                offset=name_tok.offset,
                known=sorted(FUNCTIONS),
            )
        opener = self.peek()
        if opener.kind != "lparen":
            raise self.fail("expected '(' after function name", opener, ("(",))
        self.advance()
        args: list[str] = []
        if self.peek().kind != "rparen":
            while True:
                arg_tok = self.peek()
                if arg_tok.kind != "ident":
                    raise self.fail(
                        f"expected argument identifier, got {arg_tok.text or 'end of input'!r}",
                        arg_tok,
                        ("identifier",),
                    )
                self.advance()
                args.append(arg_tok.text)
                if self.peek().kind == "comma":
                    self.advance()
                    continue
                break
        closer = self.peek()
        if closer.kind != "rparen":
            raise self.fail("expected ')'", closer, (")", ","))
        self.advance()
        if len(args) != FUNCTIONS[name]:
            raise self.fail(
                f"{name}() takes {FUNCTIONS[name]} argument(s), got {len(args)}",
                closer,
                ("argument",),
            )
        return FunctionCall(name, tuple(args))


def parse_expression(text: str) -> Expression:
    """Parse DSL text into an AST; raises E_PARSE / E_UNKNOWN_FUNC."""
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# Formatter
# ---------------------------------------------------------------------------

def _format_number(value: float) -> str:
    if value == int(value):
        return str(int(value))
    return repr(value)


def _escape(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


# binding strength, loosest first
_LEVEL_OR, _LEVEL_AND, _LEVEL_NOT, _LEVEL_ATOM = 1, 2, 3, 4


def _level(expr: Expression) -> int:
    if isinstance(expr, Or):
        return _LEVEL_OR
    if isinstance(expr, And):
        return _LEVEL_AND
    if isinstance(expr, Not):
        return _LEVEL_NOT
    return _LEVEL_ATOM


def format_expression(expr: Expression) -> str:
    """Render canonical text: single spaces, minimal parentheses."""
    if isinstance(expr, Literal):
        if isinstance(expr.value, bool):
            return "true" if expr.value else "false"
        if isinstance(expr.value, str):
            return _escape(expr.value)
        text = _format_number(expr.value)
        return f"{text} {expr.unit}" if expr.unit else text
    if isinstance(expr, FunctionCall):
        return f"{expr.name}({', '.join(expr.args)})"
    if isinstance(expr, Compare):
        return f"{format_expression(expr.left)} {expr.op} {format_expression(expr.right)}"
    if isinstance(expr, Not):
        inner = format_expression(expr.operand)
        if _level(expr.operand) < _LEVEL_NOT:
            inner = f"({inner})"
        return f"not {inner}"
    if isinstance(expr, (And, Or)):
        own = _level(expr)
        word = " and " if isinstance(expr, And) else " or "
        parts = []
        for child in expr.children:
            text = format_expression(child)
            if _level(child) <= own:
                text = f"({text})"
            parts.append(text)
        return word.join(parts)
    raise TypeError(f"not an expression node: {expr!r}")


# ---------------------------------------------------------------------------
# Evaluation environment
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Quantity:
    """A number with an optional opaque unit tag (no conversions)."""

    value: float
    unit: str | None = None


EnvValue = bool | str | Quantity


@dataclass(frozen=True)
class EvaluationEnv:
    """Structured facts a case exposes to clause expressions."""

    assertions: dict[str, EnvValue] = field(default_factory=dict)
    patient: dict[str, EnvValue] = field(default_factory=dict)
    context: dict[str, EnvValue] = field(default_factory=dict)
    formulary: dict[str, str] = field(default_factory=dict)
    jurisdiction: str | None = None

    def overlay(self, delta: dict) -> "EvaluationEnv":
        """Return a copy with ``delta`` applied; a None value removes the key."""
        maps = {}
        for name in ("assertions", "patient", "context", "formulary"):
            current = dict(getattr(self, name))
            for key, raw in (delta.get(name) or {}).items():
                if raw is None:
                    current.pop(key, None)
                else:
                    current[key] = _decode_env_value(raw, where=f"{name}.{key}")
            maps[name] = current
        jurisdiction = delta.get("jurisdiction", self.jurisdiction)
        return EvaluationEnv(jurisdiction=jurisdiction, **maps)


def _decode_env_value(raw: object, where: str) -> EnvValue:
    if isinstance(raw, bool):
        return raw
    if isinstance(raw, (int, float)):
        return Quantity(float(raw))
    if isinstance(raw, str):
        return raw
    if isinstance(raw, dict) and set(raw) == {"value", "unit"}:
        value, unit = raw["value"], raw["unit"]
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise SyntaxError_(f"{where}: quantity value must be a number", location=where)
        if unit not in UNITS:
            raise SyntaxError_(
                f"{where}: unknown unit {unit!r} (known: {sorted(UNITS)})", location=where
            )
        return Quantity(float(value), unit)
    raise SyntaxError_(
        f"{where}: environment values must be booleans, numbers, strings, "
        "or {value, unit} objects",
        location=where,
    )


def env_from_dict(raw: dict, jurisdiction: str | None = None) -> EvaluationEnv:
    """Decode the case-file ``env`` object. Units are only legal on assertions."""
    maps: dict[str, dict[str, EnvValue]] = {}
    for name in ("assertions", "patient", "context"):
        section = raw.get(name) or {}
        if not isinstance(section, dict):
            raise SyntaxError_(f"env.{name} must be an object", location=f"env.{name}")
        decoded = {}
        for key, value in section.items():
            decoded[key] = _decode_env_value(value, where=f"env.{name}.{key}")
            if name != "assertions" and isinstance(decoded[key], Quantity) and decoded[key].unit:
                raise SyntaxError_(
                    f"env.{name}.{key}: unit tags are only allowed on assertions",
                    location=f"env.{name}.{key}",
                )
        maps[name] = decoded
    formulary = raw.get("formulary") or {}
    if not isinstance(formulary, dict):
        raise SyntaxError_("env.formulary must be an object", location="env.formulary")
    for drug, status in formulary.items():
        if status not in FORMULARY_STATUSES:
            raise SyntaxError_(
                f"env.formulary.{drug}: status must be one of {sorted(FORMULARY_STATUSES)}",
                location=f"env.formulary.{drug}",
            )
    return EvaluationEnv(
        assertions=maps["assertions"],
        patient=maps["patient"],
        context=maps["context"],
        formulary=dict(formulary),
        jurisdiction=jurisdiction if jurisdiction is not None else raw.get("jurisdiction"),
    )


def env_to_dict(env: EvaluationEnv) -> dict:
    def encode(value: EnvValue) -> object:
        if isinstance(value, Quantity):
            if value.unit is None:
                return value.value
            return {"value": value.value, "unit": value.unit}
        return value

    return {
        "assertions": {k: encode(v) for k, v in sorted(env.assertions.items())},
        "patient": {k: encode(v) for k, v in sorted(env.patient.items())},
        "context": {k: encode(v) for k, v in sorted(env.context.items())},
        "formulary": dict(sorted(env.formulary.items())),
        "jurisdiction": env.jurisdiction,
    }


# ---------------------------------------------------------------------------
# Evaluator
# ---------------------------------------------------------------------------

class _Missing:
    __slots__ = ()

    def __repr__(self) -> str:
        return "MISSING"


MISSING = _Missing()


def _call_value(call: FunctionCall, env: EvaluationEnv) -> EnvValue | _Missing:
    if call.name == "value":
        return env.assertions.get(call.args[0], MISSING)
    if call.name == "patient":
        return env.patient.get(call.args[0], MISSING)
    if call.name == "context":
        return env.context.get(call.args[0], MISSING)
    if call.name == "formulary":
        return env.formulary.get(call.args[0], MISSING)
    if call.name == "jurisdiction":
        return env.jurisdiction if env.jurisdiction is not None else MISSING
    raise UnknownFunctionError(f"unknown function {call.name!r}")


def _operand_value(operand: Operand, env: EvaluationEnv) -> EnvValue | _Missing:
    if isinstance(operand, Literal):
        if isinstance(operand.value, (int, float)) and not isinstance(operand.value, bool):
            return Quantity(float(operand.value), operand.unit)
        return operand.value
    if operand.name == "exists":
        return operand.args[0] in env.assertions
    return _call_value(operand, env)


def _compare(op: str, left: EnvValue, right: EnvValue) -> bool:
    if isinstance(left, Quantity) and isinstance(right, Quantity):
        if left.unit != right.unit:
            raise UnitMismatchError(
                f"cannot compare {left.unit or 'unitless'} with {right.unit or 'unitless'}",
                left_unit=left.unit,
                right_unit=right.unit,
            )
        a, b = left.value, right.value
    elif isinstance(left, bool) and isinstance(right, bool):
        if op not in ("==", "!="):
            raise TypeMismatchError(f"operator {op!r} is not defined for booleans")
        a, b = left, right
    elif isinstance(left, str) and isinstance(right, str):
        if op not in ("==", "!="):
            raise TypeMismatchError(f"operator {op!r} is not defined for text")
        a = unicodedata.normalize("NFC", left)
        b = unicodedata.normalize("NFC", right)
    else:
        raise TypeMismatchError(
            f"cannot compare {type(left).__name__} with {type(right).__name__}"
        )
    if op == "==":
        return a == b
    if op == "!=":
        return a != b
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    return a >= b


def evaluate_expression(expr: Expression, env: EvaluationEnv) -> TriState:
    """Evaluate under Kleene semantics; raises E_UNIT / E_TYPE on bad operands."""
    if isinstance(expr, Literal):
        if isinstance(expr.value, bool):
            return TriState.of(expr.value)
        raise TypeMismatchError("a bare literal expression must be boolean")
    if isinstance(expr, FunctionCall):
        value = _operand_value(expr, env)
        if value is MISSING:
            return TriState.UNKNOWN
        if isinstance(value, bool):
            return TriState.of(value)
        raise TypeMismatchError(
            f"{expr.name}({', '.join(expr.args)}) is not boolean; compare it to a literal"
        )
    if isinstance(expr, Compare):
        left = _operand_value(expr.left, env)
        right = _operand_value(expr.right, env)
        if left is MISSING or right is MISSING:
            return TriState.UNKNOWN
        return TriState.of(_compare(expr.op, left, right))
    if isinstance(expr, Not):
        return evaluate_expression(expr.operand, env).negate()
    if isinstance(expr, And):
        result = TriState.TRUE
        for child in expr.children:
            result = kleene_and(result, evaluate_expression(child, env))
            if result is TriState.FALSE:
                return result
        return result
    if isinstance(expr, Or):
        result = TriState.FALSE
        for child in expr.children:
            result = kleene_or(result, evaluate_expression(child, env))
            if result is TriState.TRUE:
                return result
        return result
    raise TypeError(f"not an expression node: {expr!r}")
