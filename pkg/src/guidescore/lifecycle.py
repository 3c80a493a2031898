"""Registry revision, historical rescoring, and dataset lint gates.

A revision document is JSON::

    { "new_version_label": "2025-Q4",
      "tier_changes": [{"id": "...", "tier": "high"}],
      "retire": ["..."],
      "add": [clause objects] }

Migration is a pure transformation producing a new registry plus the diff and
a Markdown changelog. Historical recalculation rescores the archived cases
under the new registry while keeping both reports, so longitudinal
comparisons stay possible; archived inputs are never mutated.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

from . import registry as reg
from . import scoring
from .errors import BadTierError, EngineError, SyntaxError_, UnknownIdError
from .overrides import OverrideOntology

MULTI_TURN_GATE = 0.50
MULTI_TURN_MIN = 3


# ---------------------------------------------------------------------------
# Migration
# ---------------------------------------------------------------------------

def migrate_registry(old: reg.Registry, revisions: str) -> tuple[reg.Registry, reg.MigrationDiff]:
    """Apply a revision document; returns the new registry and its diff."""
    try:
        doc = json.loads(revisions)
    except json.JSONDecodeError as exc:
        raise SyntaxError_(f"invalid JSON: {exc.msg}", position=exc.pos,
                           line=exc.lineno, column=exc.colno) from None
    if not isinstance(doc, dict):
        raise SyntaxError_("revision document must be a JSON object", location="$")
    new_label = doc.get("new_version_label")
    if not isinstance(new_label, str) or not new_label.strip():
        raise SyntaxError_("revision document needs a nonempty new_version_label",
                           location="new_version_label")
    known = {c.id for c in old.clauses}
    retire = doc.get("retire", [])
    if not isinstance(retire, list):
        raise SyntaxError_("retire must be a list of clause ids", location="retire")
    for clause_id in retire:
        if clause_id not in known:
            raise UnknownIdError(f"cannot retire unknown clause {clause_id!r}",
                                 clause_id=clause_id)
    tier_changes = doc.get("tier_changes", [])
    if not isinstance(tier_changes, list):
        raise SyntaxError_("tier_changes must be a list", location="tier_changes")
    new_tiers: dict[str, str] = {}
    for i, change in enumerate(tier_changes):
        if not isinstance(change, dict) or "id" not in change or "tier" not in change:
            raise SyntaxError_(f"tier_changes[{i}] must be an object with id and tier",
                               location=f"tier_changes[{i}]")
        clause_id, tier = change["id"], change["tier"]
        if clause_id not in known:
            raise UnknownIdError(f"cannot change tier of unknown clause {clause_id!r}",
                                 clause_id=clause_id)
        if tier not in reg.TIERS:
            raise BadTierError(f"tier must be one of {list(reg.TIERS)}, got {tier!r}",
                               clause_id=clause_id, tier=tier)
        new_tiers[clause_id] = tier
    additions = doc.get("add", [])
    if not isinstance(additions, list):
        raise SyntaxError_("add must be a list of clause objects", location="add")

    clauses: list[reg.GuidelineClause] = []
    retired = set(retire)
    for clause in old.clauses:
        if clause.id in retired:
            continue
        if clause.id in new_tiers:
            clause = replace(clause, tier=new_tiers[clause.id])
        clauses.append(clause)
    for i, raw in enumerate(additions):
        clauses.append(reg.clause_from_dict(raw, f"add:{i}"))
    benchmark_year = doc.get("benchmark_year", old.benchmark_year)
    new = reg.build_registry(new_label, benchmark_year, clauses)
    return new, reg.diff_registries(old, new)


# ---------------------------------------------------------------------------
# Historical recalculation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RecalculatedReport:
    case_id: str
    old_score: scoring.ScoreReport
    new_score: scoring.ScoreReport | None  # None when rescoring failed
    benchmark_year: int | None
    notes: tuple[str, ...]
    error: str | None = None


def recalculate_history(
    archive: list[tuple[scoring.CaseRecord, scoring.ScoreReport]],
    new_registry: reg.Registry,
    ontology: OverrideOntology,
) -> list[RecalculatedReport]:
    """Rescore archived cases under the new registry; errors are collected.

    Each case keeps its benchmark year, so effective windows still resolve as
    of the original vintage. Clauses that were applicable but are now retired
    or re-tiered are called out in the notes.
    """
    results: list[RecalculatedReport] = []
    new_ids = {c.id for c in new_registry.clauses}
    for case, old_report in archive:
        try:
            new_report = scoring.score_case(new_registry, ontology, case)
        except EngineError as exc:
            results.append(RecalculatedReport(
                case_id=case.case_id,
                old_score=old_report,
                new_score=None,
                benchmark_year=case.benchmark_year,
                notes=(),
                error=str(exc),
            ))
            continue
        notes: list[str] = []
        new_outcomes = {o.clause_id: o for o in new_report.outcomes}
        for outcome in old_report.outcomes:
            if not outcome.applicable:
                continue
            if outcome.clause_id not in new_ids:
                notes.append(f"retired clause {outcome.clause_id} dropped")
                continue
            after = new_outcomes.get(outcome.clause_id)
            if after is not None and abs(after.base_points) != abs(outcome.base_points):
                notes.append(
                    f"tier change applied to {outcome.clause_id}: "
                    f"{abs(outcome.base_points):g} -> {abs(after.base_points):g} points"
                )
        results.append(RecalculatedReport(
            case_id=case.case_id,
            old_score=old_report,
            new_score=new_report,
            benchmark_year=case.benchmark_year,
            notes=tuple(notes),
        ))
    return results


def recalculated_to_dict(record: RecalculatedReport) -> dict:
    return {
        "case_id": record.case_id,
        "benchmark_year": record.benchmark_year,
        "old_score": scoring.score_report_to_dict(record.old_score),
        "new_score": (None if record.new_score is None
                      else scoring.score_report_to_dict(record.new_score)),
        "notes": list(record.notes),
        "error": record.error,
    }


def load_archive(document_text: str) -> list[tuple[scoring.CaseRecord, scoring.ScoreReport]]:
    """Archive file: JSON array of {"case": CaseRecord, "report": ScoreReport}."""
    try:
        raw = json.loads(document_text)
    except json.JSONDecodeError as exc:
        raise SyntaxError_(f"invalid JSON: {exc.msg}", position=exc.pos,
                           line=exc.lineno, column=exc.colno) from None
    if not isinstance(raw, list):
        raise SyntaxError_("archive must be a JSON array", location="$")
    pairs = []
    for i, item in enumerate(raw):
        if not isinstance(item, dict) or "case" not in item or "report" not in item:
            raise SyntaxError_(f"archive[{i}] must be an object with case and report",
                               location=f"archive[{i}]")
        pairs.append((
            scoring.case_from_dict(item["case"], i),
            scoring.score_report_from_dict(item["report"]),
        ))
    return pairs


# ---------------------------------------------------------------------------
# Dataset lint
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LintReport:
    n_cases: int
    multi_turn_count: int
    multi_turn_share: float
    multi_turn_gate: str  # PASS | FAIL
    missing_jurisdiction: int
    missing_benchmark_year: int
    volatile_untagged: int | None  # None when no registry was supplied

    @property
    def gate_passed(self) -> bool:
        return self.multi_turn_gate == "PASS"


def lint_dataset(cases: list[scoring.CaseRecord],
                 registry: reg.Registry | None = None) -> LintReport:
    """Dataset checks: the >= 50% multi-turn gate (boundary passes), missing
    jurisdiction / benchmark_year fields, and cases that touch volatile
    clauses without carrying the 'volatile' condition tag (registry needed)."""
    n = len(cases)
    multi = sum(1 for c in cases if len(c.turns) >= MULTI_TURN_MIN)
    share = multi / n if n else 0.0
    missing_jurisdiction = sum(1 for c in cases if c.jurisdiction is None)
    missing_year = sum(1 for c in cases if c.benchmark_year is None)
    volatile_untagged: int | None = None
    if registry is not None:
        volatile_untagged = 0
        for case in cases:
            if case.jurisdiction is None:
                continue  # already counted above; applicability is undecidable
            try:
                resolved = reg.resolve_applicable(registry, case)
            except EngineError:
                continue
            touches_volatile = any(r.applicable and r.clause.volatile for r in resolved)
            if touches_volatile and "volatile" not in case.condition_tags:
                volatile_untagged += 1
    return LintReport(
        n_cases=n,
        multi_turn_count=multi,
        multi_turn_share=share,
        multi_turn_gate="PASS" if share >= MULTI_TURN_GATE else "FAIL",
        missing_jurisdiction=missing_jurisdiction,
        missing_benchmark_year=missing_year,
        volatile_untagged=volatile_untagged,
    )


def lint_report_to_dict(report: LintReport) -> dict:
    return {
        "n_cases": report.n_cases,
        "multi_turn_count": report.multi_turn_count,
        "multi_turn_share": report.multi_turn_share,
        "multi_turn_gate": report.multi_turn_gate,
        "missing_jurisdiction": report.missing_jurisdiction,
        "missing_benchmark_year": report.missing_benchmark_year,
        "volatile_untagged": report.volatile_untagged,
    }
