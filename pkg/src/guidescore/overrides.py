"""Contextual override logic.

An override ontology is the sanctioned catalogue of deviation reasons. Each
entry guards a softened penalty behind a precondition over the case
environment; every applied override must carry a nonempty justification and
is recorded in an append-only, hash-chained ledger (SHA-256), so after-the-
fact tampering is detectable.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Iterable

from . import dsl
from .errors import (
    BadPenaltyError,
    DuplicateReasonError,
    EngineError,
    HashChainError,
    PositiveBaseError,
    SyntaxError_,
)

if TYPE_CHECKING:  # pragma: no cover
    from .registry import Registry
    from .scoring import CaseRecord, ScoreReport

GENESIS = "GENESIS"

MAX_PENALTY_MAGNITUDE = 3.0

# rejection reasons
UNSANCTIONED = "UNSANCTIONED"
PRECONDITION_FAILED = "PRECONDITION_FAILED"
NO_JUSTIFICATION = "NO_JUSTIFICATION"


@dataclass(frozen=True)
class OntologyEntry:
    reason_code: str
    description: str
    precondition: str
    adjusted_penalty: float  # <= 0, magnitude <= 3
    applicable_clause_ids: frozenset[str] = frozenset()  # empty = any clause
    precondition_ast: dsl.Expression | None = None

    def covers(self, clause_id: str) -> bool:
        return not self.applicable_clause_ids or clause_id in self.applicable_clause_ids


@dataclass(frozen=True)
class OverrideOntology:
    entries: tuple[OntologyEntry, ...]

    def entry(self, reason_code: str) -> OntologyEntry | None:
        for e in self.entries:
            if e.reason_code == reason_code:
                return e
        return None


@dataclass(frozen=True)
class OverrideRecord:
    reason_code: str
    clause_id: str
    justification: str
    timestamp: str
    case_id: str
    prev_hash: str | None = None
    hash: str | None = None


@dataclass(frozen=True)
class OverrideDecision:
    adjusted_points: float
    accepted: bool
    rejection_reason: str | None


EMPTY_ONTOLOGY = OverrideOntology(entries=())


# ---------------------------------------------------------------------------
# Ontology loading
# ---------------------------------------------------------------------------

def load_ontology(document_text: str) -> OverrideOntology:
    """Parse the ontology document (a JSON array of entries).

    Raises E_SYNTAX, E_DUP_REASON, or E_BAD_PENALTY.
    """
    try:
        raw = json.loads(document_text)
    except json.JSONDecodeError as exc:
        raise SyntaxError_(f"invalid JSON: {exc.msg}", position=exc.pos,
                           line=exc.lineno, column=exc.colno) from None
    if not isinstance(raw, list):
        raise SyntaxError_("ontology document must be a JSON array", location="$")
    entries: list[OntologyEntry] = []
    seen: set[str] = set()
    for i, item in enumerate(raw):
        where = f"entries[{i}]"
        if not isinstance(item, dict):
            raise SyntaxError_(f"{where}: entry must be an object", location=where)
        code = item.get("reason_code")
        if not isinstance(code, str) or not code:
            raise SyntaxError_(f"{where}: missing reason_code", location=where)
        if code in seen:
            raise DuplicateReasonError(f"duplicate reason code {code!r}", reason_code=code)
        seen.add(code)
        description = item.get("description", "")
        if not isinstance(description, str) or not description.strip():
            raise SyntaxError_(f"{code}: description must be nonempty text",
                               location=f"{code}.description")
        penalty = item.get("adjusted_penalty")
        if not isinstance(penalty, (int, float)) or isinstance(penalty, bool):
            raise SyntaxError_(f"{code}: adjusted_penalty must be a number",
                               location=f"{code}.adjusted_penalty")
        if penalty > 0 or abs(penalty) > MAX_PENALTY_MAGNITUDE:
            raise BadPenaltyError(
                f"{code}: adjusted_penalty must be in [-{MAX_PENALTY_MAGNITUDE:g}, 0], "
                f"got {penalty}",
                reason_code=code,
                adjusted_penalty=penalty,
            )
        precondition = item.get("precondition", "true")
        if not isinstance(precondition, str):
            raise SyntaxError_(f"{code}: precondition must be a string",
                               location=f"{code}.precondition")
        try:
            precondition_ast = dsl.parse_expression(precondition)
        except EngineError as exc:
            raise SyntaxError_(f"{code}: precondition does not parse: {exc.message}",
                               location=f"{code}.precondition",
                               offset=exc.details.get("offset")) from exc
        clause_ids = item.get("applicable_clause_ids", [])
        if not isinstance(clause_ids, list):
            raise SyntaxError_(f"{code}: applicable_clause_ids must be a list",
                               location=f"{code}.applicable_clause_ids")
        entries.append(OntologyEntry(
            reason_code=code,
            description=description,
            precondition=precondition,
            adjusted_penalty=float(penalty),
            applicable_clause_ids=frozenset(clause_ids),
            precondition_ast=precondition_ast,
        ))
    return OverrideOntology(entries=tuple(entries))


def ontology_to_dict(ontology: OverrideOntology) -> list[dict]:
    return [
        {
            "reason_code": e.reason_code,
            "description": e.description,
            "precondition": e.precondition,
            "adjusted_penalty": e.adjusted_penalty,
            "applicable_clause_ids": sorted(e.applicable_clause_ids),
        }
        for e in ontology.entries
    ]


# ---------------------------------------------------------------------------
# Override application
# ---------------------------------------------------------------------------

def apply_override(base_points: float, request: OverrideRecord,
                   ontology: OverrideOntology, env: dsl.EvaluationEnv) -> OverrideDecision:
    """Decide one override request against a triggered penalty.

    Accepted requests soften the penalty to max(base, entry penalty); the
    adjustment can never deepen the penalty or flip its sign. Rejected
    requests leave the full base penalty in place.
    """
    if base_points >= 0:
        raise PositiveBaseError(
            f"overrides apply to penalties only (base_points={base_points})",
            base_points=base_points,
        )
    entry = ontology.entry(request.reason_code)
    if entry is None or not entry.covers(request.clause_id):
        return OverrideDecision(base_points, False, UNSANCTIONED)
    if not request.justification or not request.justification.strip():
        return OverrideDecision(base_points, False, NO_JUSTIFICATION)
    if dsl.evaluate_expression(entry.precondition_ast, env) is not dsl.TriState.TRUE:
        return OverrideDecision(base_points, False, PRECONDITION_FAILED)
    adjusted = max(base_points, entry.adjusted_penalty)
    return OverrideDecision(min(adjusted, 0.0), True, None)


# ---------------------------------------------------------------------------
# Hash-chained override ledger
# ---------------------------------------------------------------------------

_PAYLOAD_FIELDS = ("reason_code", "clause_id", "justification", "timestamp", "case_id")


def _canonical_payload(record: OverrideRecord) -> bytes:
    payload = {name: getattr(record, name) for name in _PAYLOAD_FIELDS}
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _digest(prev_hash: str, record: OverrideRecord) -> str:
    return hashlib.sha256(prev_hash.encode("utf-8") + _canonical_payload(record)).hexdigest()


def append_override(ledger: tuple[OverrideRecord, ...],
                    record: OverrideRecord) -> tuple[OverrideRecord, ...]:
    """Seal the record onto the chain; prior entries are untouched."""
    tip = ledger[-1].hash if ledger else GENESIS
    if record.prev_hash is not None and record.prev_hash != tip:
        raise HashChainError(
            f"record prev_hash {record.prev_hash!r} does not match ledger tip {tip!r}",
            expected=tip,
            got=record.prev_hash,
        )
    sealed = replace(record, prev_hash=tip, hash=_digest(tip, record))
    return ledger + (sealed,)


def verify_ledger(ledger: Iterable[OverrideRecord]) -> tuple[bool, int | None]:
    """Walk the chain; returns (ok, index of the first bad entry or None)."""
    prev = GENESIS
    for i, record in enumerate(ledger):
        if record.prev_hash != prev or record.hash != _digest(prev, record):
            return False, i
        prev = record.hash
    return True, None


def override_record_to_dict(record: OverrideRecord) -> dict:
    out = {name: getattr(record, name) for name in _PAYLOAD_FIELDS}
    out["prev_hash"] = record.prev_hash
    out["hash"] = record.hash
    return out


def override_record_from_dict(raw: dict, case_id: str | None = None) -> OverrideRecord:
    for name in ("reason_code", "clause_id", "justification"):
        if not isinstance(raw.get(name), str):
            raise SyntaxError_(f"override record: {name} must be a string", location=name)
    return OverrideRecord(
        reason_code=raw["reason_code"],
        clause_id=raw["clause_id"],
        justification=raw["justification"],
        timestamp=raw.get("timestamp", ""),
        case_id=raw.get("case_id", case_id or ""),
        prev_hash=raw.get("prev_hash"),
        hash=raw.get("hash"),
    )


def write_ledger(path: str, ledger: Iterable[OverrideRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in ledger:
            fh.write(json.dumps(override_record_to_dict(record), sort_keys=True) + "\n")


def read_ledger(path: str) -> tuple[OverrideRecord, ...]:
    records: list[OverrideRecord] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(override_record_from_dict(json.loads(line)))
    return tuple(records)


# ---------------------------------------------------------------------------
# What-if rescoring
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClauseDelta:
    clause_id: str
    points_before: float
    points_after: float
    applicable_before: bool
    applicable_after: bool
    exclusion_reason_after: str | None

    @property
    def delta(self) -> float:
        return self.points_after - self.points_before


@dataclass(frozen=True)
class WhatIfResult:
    before: "ScoreReport"
    after: "ScoreReport"
    deltas: tuple[ClauseDelta, ...]


def what_if_rescore(registry: "Registry", ontology: OverrideOntology, case: "CaseRecord",
                    env_delta: dict) -> WhatIfResult:
    """Score the case twice, with and without the environment delta overlaid.

    Side-effect-free: no ledger writes. The delta list covers exactly the
    clauses whose adjusted points changed.
    """
    from .scoring import score_case  # local import: scoring depends on this module

    before = score_case(registry, ontology, case)
    after_case = replace(case, env=case.env.overlay(env_delta))
    after = score_case(registry, ontology, after_case)
    deltas: list[ClauseDelta] = []
    after_by_id = {o.clause_id: o for o in after.outcomes}
    for outcome in before.outcomes:
        other = after_by_id[outcome.clause_id]
        if outcome.adjusted_points != other.adjusted_points:
            deltas.append(ClauseDelta(
                clause_id=outcome.clause_id,
                points_before=outcome.adjusted_points,
                points_after=other.adjusted_points,
                applicable_before=outcome.applicable,
                applicable_after=other.applicable,
                exclusion_reason_after=other.exclusion_reason,
            ))
    return WhatIfResult(before=before, after=after, deltas=tuple(deltas))
