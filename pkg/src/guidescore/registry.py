"""Versioned registry of guideline-anchored reward clauses.

A registry document is UTF-8 JSON::

    { "version_label": "2025-Q3", "benchmark_year": 2025, "clauses": [ ... ] }

Each clause carries its canonical identifier, evidence tier, polarity,
jurisdiction scope, effective window, the two DSL expressions, and the
human-readable checklist text plus the verbatim guideline quote that back
every audit. The trace ledger is derived from those fields at parse time, so
every clause id always has exactly one trace record.

Registries are immutable after parsing; every query here is a pure function.
"""

from __future__ import annotations

import datetime as dt
import enum
import json
import re
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from . import dsl
from .errors import (
    BadIdError,
    ClauseExpressionError,
    DuplicateIdError,
    EngineError,
    NoJurisdictionError,
    NotFoundError,
    SyntaxError_,
)

if TYPE_CHECKING:  # pragma: no cover
    from .scoring import CaseRecord

GLOBAL = "GLOBAL"
TIERS = ("high", "moderate", "low")
POLARITIES = ("reward", "penalize")

# <BODY>-<Topic>-<Year>-Rec-<dotted.path>
CLAUSE_ID_RE = re.compile(
    r"^[A-Z][A-Z0-9]*-[A-Za-z0-9]+-\d{4}-Rec-[0-9A-Za-z]+(?:\.[0-9A-Za-z]+)*$"
)

VERDICT_SENTINEL = "verdict()"

_ISO_JURISDICTION_RE = re.compile(r"^[A-Z]{2}$")


@dataclass(frozen=True)
class GuidelineClause:
    id: str
    guideline_title: str
    guideline_version: str
    recommendation_path: str
    tier: str  # high | moderate | low
    polarity: str  # reward | penalize
    jurisdictions: frozenset[str]  # ISO alpha-2 codes, or {GLOBAL}
    effective_start: dt.date
    effective_end: dt.date | None  # None means OPEN
    applies_when: str
    condition_expr: str
    checklist_text: str
    trace_quote: str
    volatile: bool = False
    sanctioned_reasons: frozenset[str] = frozenset()
    # pre-parsed forms, populated by the loader
    applies_when_ast: dsl.Expression | None = field(default=None, compare=False, repr=False)
    condition_ast: dsl.Expression | None = field(default=None, compare=False, repr=False)

    @property
    def uses_verdict(self) -> bool:
        return self.condition_expr.strip() == VERDICT_SENTINEL


@dataclass(frozen=True)
class TraceRecord:
    clause_id: str
    guideline_title: str
    recommendation_path: str
    checklist_text: str
    trace_quote: str
    registry_version: str


@dataclass(frozen=True)
class Registry:
    version_label: str
    benchmark_year: int
    clauses: tuple[GuidelineClause, ...]
    ledger: tuple[TraceRecord, ...]

    def clause(self, clause_id: str) -> GuidelineClause | None:
        return self._by_id.get(clause_id)

    @property
    def _by_id(self) -> dict[str, GuidelineClause]:
        # tiny registries; rebuilding the index is cheaper than caching on a
        # frozen dataclass
        return {c.id: c for c in self.clauses}


class ApplicabilityReason(enum.Enum):
    APPLICABLE = "APPLICABLE"
    JURISDICTION = "JURISDICTION"
    NOT_YET_EFFECTIVE = "NOT_YET_EFFECTIVE"
    EXPIRED = "EXPIRED"
    CONDITION_FALSE = "CONDITION_FALSE"
    INSUFFICIENT_CONTEXT = "INSUFFICIENT_CONTEXT"


@dataclass(frozen=True)
class ClauseApplicability:
    clause: GuidelineClause
    applicable: bool
    reason: ApplicabilityReason


# ---------------------------------------------------------------------------
# Parsing / validation
# ---------------------------------------------------------------------------

def _require(condition: bool, message: str, location: str) -> None:
    if not condition:
        raise SyntaxError_(message, location=location)


def _parse_date(raw: object, location: str) -> dt.date:
    _require(isinstance(raw, str), f"{location}: date must be a 'YYYY-MM-DD' string", location)
    try:
        return dt.date.fromisoformat(raw)
    except ValueError as exc:
        raise SyntaxError_(f"{location}: {exc}", location=location) from None


def _parse_jurisdictions(raw: object, location: str) -> frozenset[str]:
    _require(isinstance(raw, list) and raw, f"{location}: jurisdictions must be a nonempty list",
             location)
    codes = frozenset(raw)
    _require(len(codes) == len(raw), f"{location}: duplicate jurisdiction codes", location)
    for code in codes:
        if code != GLOBAL and not _ISO_JURISDICTION_RE.match(str(code)):
            raise SyntaxError_(
                f"{location}: {code!r} is not an ISO 3166-1 alpha-2 code or GLOBAL",
                location=location,
            )
    if GLOBAL in codes and len(codes) > 1:
        raise SyntaxError_(f"{location}: GLOBAL may not co-occur with specific codes",
                           location=location)
    return codes


def _parse_clause_expr(text: object, clause_id: str, field_name: str,
                       allow_verdict: bool) -> dsl.Expression | None:
    if not isinstance(text, str):
        raise SyntaxError_(f"clause {clause_id}: {field_name} must be a string",
                           location=f"{clause_id}.{field_name}")
    if allow_verdict and text.strip() == VERDICT_SENTINEL:
        return None
    try:
        return dsl.parse_expression(text)
    except EngineError as exc:
        raise ClauseExpressionError(
            f"clause {clause_id}: {field_name} does not parse: {exc.message}",
            clause_id=clause_id,
            field=field_name,
            offset=exc.details.get("offset"),
        ) from exc


def clause_from_dict(raw: dict, index: int | str = "?") -> GuidelineClause:
    location = f"clauses[{index}]"
    _require(isinstance(raw, dict), f"{location}: clause must be an object", location)
    clause_id = raw.get("id")
    _require(isinstance(clause_id, str) and bool(clause_id),
             f"{location}: missing clause id", location)
    if not CLAUSE_ID_RE.match(clause_id):
        raise BadIdError(
            f"clause id {clause_id!r} does not match <BODY>-<Topic>-<Year>-Rec-<path>",
            clause_id=clause_id,
        )
    location = f"clause {clause_id}"
    for name in ("guideline_title", "guideline_version", "recommendation_path",
                 "checklist_text", "trace_quote"):
        value = raw.get(name)
        _require(isinstance(value, str) and bool(value.strip()),
                 f"{location}: {name} must be nonempty text", f"{clause_id}.{name}")
    tier = raw.get("tier")
    _require(tier in TIERS, f"{location}: tier must be one of {list(TIERS)}", f"{clause_id}.tier")
    polarity = raw.get("polarity")
    _require(polarity in POLARITIES,
             f"{location}: polarity must be one of {list(POLARITIES)}", f"{clause_id}.polarity")
    jurisdictions = _parse_jurisdictions(raw.get("jurisdictions"), f"{clause_id}.jurisdictions")
    effective_start = _parse_date(raw.get("effective_start"), f"{clause_id}.effective_start")
    raw_end = raw.get("effective_end")
    effective_end = None if raw_end == "OPEN" else _parse_date(raw_end, f"{clause_id}.effective_end")
    if effective_end is not None and not effective_start < effective_end:
        raise SyntaxError_(f"{location}: effective_start must precede effective_end",
                           location=f"{clause_id}.effective_end")
    applies_ast = _parse_clause_expr(raw.get("applies_when", "true"), clause_id,
                                     "applies_when", allow_verdict=False)
    condition_ast = _parse_clause_expr(raw.get("condition_expr"), clause_id,
                                       "condition_expr", allow_verdict=True)
    sanctioned = raw.get("sanctioned_reasons", [])
    _require(isinstance(sanctioned, list),
             f"{location}: sanctioned_reasons must be a list", f"{clause_id}.sanctioned_reasons")
    volatile = raw.get("volatile", False)
    _require(isinstance(volatile, bool), f"{location}: volatile must be a boolean",
             f"{clause_id}.volatile")
    return GuidelineClause(
        id=clause_id,
        guideline_title=raw["guideline_title"],
        guideline_version=raw["guideline_version"],
        recommendation_path=raw["recommendation_path"],
        tier=tier,
        polarity=polarity,
        jurisdictions=jurisdictions,
        effective_start=effective_start,
        effective_end=effective_end,
        applies_when=raw.get("applies_when", "true"),
        condition_expr=raw["condition_expr"],
        checklist_text=raw["checklist_text"],
        trace_quote=raw["trace_quote"],
        volatile=volatile,
        sanctioned_reasons=frozenset(sanctioned),
        applies_when_ast=applies_ast,
        condition_ast=condition_ast,
    )


def build_registry(version_label: str, benchmark_year: int,
                   clauses: list[GuidelineClause]) -> Registry:
    """Assemble and validate a registry; derives the trace ledger."""
    _require(isinstance(version_label, str) and bool(version_label.strip()),
             "version_label must be nonempty text", "version_label")
    _require(isinstance(benchmark_year, int) and not isinstance(benchmark_year, bool),
             "benchmark_year must be an integer year", "benchmark_year")
    seen: set[str] = set()
    for clause in clauses:
        if clause.id in seen:
            raise DuplicateIdError(f"duplicate clause id {clause.id!r}", clause_id=clause.id)
        seen.add(clause.id)
    ledger = tuple(
        TraceRecord(
            clause_id=c.id,
            guideline_title=c.guideline_title,
            recommendation_path=c.recommendation_path,
            checklist_text=c.checklist_text,
            trace_quote=c.trace_quote,
            registry_version=version_label,
        )
        for c in clauses
    )
    return Registry(version_label, benchmark_year, tuple(clauses), ledger)


def parse_registry(document_text: str) -> Registry:
    """Parse and validate a registry document.

    Raises E_SYNTAX (position-annotated), E_DUP_ID, E_BAD_ID, or E_EXPR.
    """
    try:
        raw = json.loads(document_text)
    except json.JSONDecodeError as exc:
        raise SyntaxError_(f"invalid JSON: {exc.msg}", position=exc.pos,
                           line=exc.lineno, column=exc.colno) from None
    _require(isinstance(raw, dict), "registry document must be a JSON object", "$")
    clauses_raw = raw.get("clauses")
    _require(isinstance(clauses_raw, list), "clauses must be a list", "clauses")
    clauses = [clause_from_dict(c, i) for i, c in enumerate(clauses_raw)]
    return build_registry(raw.get("version_label"), raw.get("benchmark_year"), clauses)


def clause_to_dict(clause: GuidelineClause) -> dict:
    return {
        "id": clause.id,
        "guideline_title": clause.guideline_title,
        "guideline_version": clause.guideline_version,
        "recommendation_path": clause.recommendation_path,
        "tier": clause.tier,
        "polarity": clause.polarity,
        "jurisdictions": sorted(clause.jurisdictions),
        "effective_start": clause.effective_start.isoformat(),
        "effective_end": "OPEN" if clause.effective_end is None else clause.effective_end.isoformat(),
        "applies_when": clause.applies_when,
        "condition_expr": clause.condition_expr,
        "checklist_text": clause.checklist_text,
        "trace_quote": clause.trace_quote,
        "volatile": clause.volatile,
        "sanctioned_reasons": sorted(clause.sanctioned_reasons),
    }


def registry_to_dict(registry: Registry) -> dict:
    return {
        "version_label": registry.version_label,
        "benchmark_year": registry.benchmark_year,
        "clauses": [clause_to_dict(c) for c in registry.clauses],
    }


# ---------------------------------------------------------------------------
# Queries
# ---------------------------------------------------------------------------

def evaluation_date(registry: Registry, case: "CaseRecord") -> dt.date:
    """Cases carry no explicit date; score as of January 1 of their vintage."""
    year = case.benchmark_year if case.benchmark_year is not None else registry.benchmark_year
    return dt.date(year, 1, 1)


def resolve_applicable(registry: Registry, case: "CaseRecord") -> list[ClauseApplicability]:
    """Decide, clause by clause, whether the case is in scope.

    A clause applies iff the case's jurisdiction is covered (or the clause is
    GLOBAL), the evaluation date falls inside the effective window, and
    applies_when evaluates True. An Unknown applies_when excludes the clause
    as INSUFFICIENT_CONTEXT: never score what cannot be established.
    """
    needs_jurisdiction = any(GLOBAL not in c.jurisdictions for c in registry.clauses)
    if case.jurisdiction is None and needs_jurisdiction:
        raise NoJurisdictionError(
            "case has no jurisdiction but the registry contains jurisdiction-scoped clauses",
            case_id=case.case_id,
        )
    when = evaluation_date(registry, case)
    results: list[ClauseApplicability] = []
    for clause in registry.clauses:
        if GLOBAL not in clause.jurisdictions and case.jurisdiction not in clause.jurisdictions:
            results.append(ClauseApplicability(clause, False, ApplicabilityReason.JURISDICTION))
            continue
        if when < clause.effective_start:
            results.append(ClauseApplicability(clause, False, ApplicabilityReason.NOT_YET_EFFECTIVE))
            continue
        if clause.effective_end is not None and when >= clause.effective_end:
            results.append(ClauseApplicability(clause, False, ApplicabilityReason.EXPIRED))
            continue
        verdict = dsl.evaluate_expression(clause.applies_when_ast, case.env)
        if verdict is dsl.TriState.TRUE:
            results.append(ClauseApplicability(clause, True, ApplicabilityReason.APPLICABLE))
        elif verdict is dsl.TriState.FALSE:
            results.append(ClauseApplicability(clause, False, ApplicabilityReason.CONDITION_FALSE))
        else:
            results.append(
                ClauseApplicability(clause, False, ApplicabilityReason.INSUFFICIENT_CONTEXT))
    return results


def trace_clause(registry: Registry, clause_id: str) -> TraceRecord:
    """Return the guideline→checklist→clause chain for one clause id."""
    for record in registry.ledger:
        if record.clause_id == clause_id:
            return record
    raise NotFoundError(f"no clause with id {clause_id!r}", clause_id=clause_id)


# ---------------------------------------------------------------------------
# Registry diffing
# ---------------------------------------------------------------------------

_DIFFED_FIELDS = (
    "guideline_title", "guideline_version", "recommendation_path", "polarity",
    "jurisdictions", "effective_start", "effective_end", "applies_when",
    "condition_expr", "checklist_text", "trace_quote", "volatile", "sanctioned_reasons",
)


@dataclass(frozen=True)
class MigrationDiff:
    added: frozenset[str]
    retired: frozenset[str]
    tier_changes: tuple[tuple[str, str, str], ...]  # (id, old tier, new tier)
    expr_changes: tuple[tuple[str, str, str, str], ...]  # (id, field, old, new)
    changelog_text: str

    @property
    def empty(self) -> bool:
        return not (self.added or self.retired or self.tier_changes or self.expr_changes)


def _field_repr(clause: GuidelineClause, name: str) -> str:
    value = getattr(clause, name)
    if isinstance(value, frozenset):
        return ",".join(sorted(value))
    if isinstance(value, dt.date):
        return value.isoformat()
    if value is None:
        return "OPEN"
    return str(value)


def _changelog(old: Registry, new: Registry, added: list[str], retired: list[str],
               tier_changes: list[tuple[str, str, str]],
               expr_changes: list[tuple[str, str, str, str]]) -> str:
    lines = [f"# Registry changelog: {old.version_label} -> {new.version_label}", ""]
    if not (added or retired or tier_changes or expr_changes):
        lines.append("No clause changes.")
        return "\n".join(lines) + "\n"
    if added:
        lines.append("## Added")
        lines.extend(f"- {cid}" for cid in added)
        lines.append("")
    if retired:
        lines.append("## Retired")
        lines.extend(f"- {cid}" for cid in retired)
        lines.append("")
    if tier_changes:
        lines.append("## Evidence tier changes")
        lines.extend(f"- {cid}: {old_t} -> {new_t}" for cid, old_t, new_t in tier_changes)
        lines.append("")
    if expr_changes:
        lines.append("## Amendments")
        lines.extend(f"- {cid}: {fname}: {o!r} -> {n!r}" for cid, fname, o, n in expr_changes)
        lines.append("")
    return "\n".join(lines).rstrip() + "\n"


def diff_registries(old: Registry, new: Registry) -> MigrationDiff:
    old_ids = {c.id for c in old.clauses}
    new_ids = {c.id for c in new.clauses}
    added = sorted(new_ids - old_ids)
    retired = sorted(old_ids - new_ids)
    tier_changes: list[tuple[str, str, str]] = []
    expr_changes: list[tuple[str, str, str, str]] = []
    for clause_id in sorted(old_ids & new_ids):
        before = old.clause(clause_id)
        after = new.clause(clause_id)
        if before.tier != after.tier:
            tier_changes.append((clause_id, before.tier, after.tier))
        for name in _DIFFED_FIELDS:
            old_repr, new_repr = _field_repr(before, name), _field_repr(after, name)
            if old_repr != new_repr:
                expr_changes.append((clause_id, name, old_repr, new_repr))
    return MigrationDiff(
        added=frozenset(added),
        retired=frozenset(retired),
        tier_changes=tuple(tier_changes),
        expr_changes=tuple(expr_changes),
        changelog_text=_changelog(old, new, added, retired, tier_changes, expr_changes),
    )


def migration_diff_to_dict(diff: MigrationDiff) -> dict:
    return {
        "added": sorted(diff.added),
        "retired": sorted(diff.retired),
        "tier_changes": [list(t) for t in diff.tier_changes],
        "expr_changes": [list(t) for t in diff.expr_changes],
        "changelog_text": diff.changelog_text,
    }
