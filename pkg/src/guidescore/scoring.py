"""Evidence-weighted case scoring.

Tier weights follow the evidence-tier table: high/strong is worth ±3 points,
moderate ±2, low/conditional ±1, positive for reward clauses and negative for
penalize clauses. A case earns the sum of adjusted points over its applicable
clauses, normalized against the maximum positive score available to it; a
case with no applicable reward clauses has no defined score (NOT_APPLICABLE)
rather than a misleading 0 or 1.

Scoring is pure and deterministic: identical (registry, ontology, case)
inputs serialize to byte-identical reports.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from . import audits, dsl, overrides, registry as reg
from .errors import (
    DuplicateIdError,
    EmptyRunError,
    SyntaxError_,
    VerdictMissingError,
)

NOT_APPLICABLE = "NOT_APPLICABLE"

TIER_MAGNITUDE = {"high": 3.0, "moderate": 2.0, "low": 1.0}

ROLES = ("user", "assistant")


def tier_weight(tier: str, polarity: str) -> float:
    """Signed point weight for a (tier, polarity) pair."""
    if tier not in TIER_MAGNITUDE:
        raise ValueError(f"unknown tier {tier!r}")
    if polarity not in reg.POLARITIES:
        raise ValueError(f"unknown polarity {polarity!r}")
    magnitude = TIER_MAGNITUDE[tier]
    return magnitude if polarity == "reward" else -magnitude


# ---------------------------------------------------------------------------
# Case records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CaseRecord:
    case_id: str
    turns: tuple[tuple[str, str], ...]  # (role, text), alternating from "user"
    env: dsl.EvaluationEnv
    benchmark_year: int | None = None
    jurisdiction: str | None = None
    condition_tags: frozenset[str] = frozenset()
    demographic_group: str | None = None
    grader_verdicts: dict[str, tuple[bool, ...]] | None = None
    override_requests: tuple[overrides.OverrideRecord, ...] = ()


def case_from_dict(raw: dict, index: int | str = "?") -> CaseRecord:
    where = f"cases[{index}]"
    if not isinstance(raw, dict):
        raise SyntaxError_(f"{where}: case must be an object", location=where)
    case_id = raw.get("case_id")
    if not isinstance(case_id, str) or not case_id:
        raise SyntaxError_(f"{where}: missing case_id", location=where)
    where = f"case {case_id}"
    turns_raw = raw.get("turns")
    if not isinstance(turns_raw, list) or not turns_raw:
        raise SyntaxError_(f"{where}: turns must be a nonempty list", location=f"{case_id}.turns")
    turns: list[tuple[str, str]] = []
    for i, item in enumerate(turns_raw):
        if isinstance(item, dict):
            role, text = item.get("role"), item.get("text")
        elif isinstance(item, list) and len(item) == 2:
            role, text = item
        else:
            raise SyntaxError_(f"{where}: turns[{i}] must be a {{role, text}} object",
                               location=f"{case_id}.turns[{i}]")
        if role not in ROLES:
            raise SyntaxError_(f"{where}: turns[{i}].role must be one of {list(ROLES)}",
                               location=f"{case_id}.turns[{i}]")
        expected = ROLES[i % 2]
        if role != expected:
            raise SyntaxError_(
                f"{where}: roles must alternate starting with user (turns[{i}] is {role!r})",
                location=f"{case_id}.turns[{i}]",
            )
        if not isinstance(text, str):
            raise SyntaxError_(f"{where}: turns[{i}].text must be a string",
                               location=f"{case_id}.turns[{i}]")
        turns.append((role, text))
    jurisdiction = raw.get("jurisdiction") or None
    benchmark_year = raw.get("benchmark_year")
    if benchmark_year is not None and (not isinstance(benchmark_year, int)
                                       or isinstance(benchmark_year, bool)):
        raise SyntaxError_(f"{where}: benchmark_year must be an integer",
                           location=f"{case_id}.benchmark_year")
    tags = raw.get("condition_tags", [])
    if not isinstance(tags, list):
        raise SyntaxError_(f"{where}: condition_tags must be a list",
                           location=f"{case_id}.condition_tags")
    env = dsl.env_from_dict(raw.get("env") or {}, jurisdiction=jurisdiction)
    verdicts_raw = raw.get("grader_verdicts")
    verdicts: dict[str, tuple[bool, ...]] | None = None
    if verdicts_raw is not None:
        if not isinstance(verdicts_raw, dict):
            raise SyntaxError_(f"{where}: grader_verdicts must be an object",
                               location=f"{case_id}.grader_verdicts")
        verdicts = {}
        for clause_id, values in verdicts_raw.items():
            if not isinstance(values, list) or not all(isinstance(v, bool) for v in values):
                raise SyntaxError_(
                    f"{where}: grader_verdicts[{clause_id}] must be a list of booleans",
                    location=f"{case_id}.grader_verdicts",
                )
            verdicts[clause_id] = tuple(values)
    requests = tuple(
        overrides.override_record_from_dict(r, case_id=case_id)
        for r in raw.get("override_requests", [])
    )
    return CaseRecord(
        case_id=case_id,
        turns=tuple(turns),
        env=env,
        benchmark_year=benchmark_year,
        jurisdiction=jurisdiction,
        condition_tags=frozenset(tags),
        demographic_group=raw.get("demographic_group"),
        grader_verdicts=verdicts,
        override_requests=requests,
    )


def load_cases(document_text: str) -> list[CaseRecord]:
    """Parse a case file (JSON array); case ids must be unique per run."""
    try:
        raw = json.loads(document_text)
    except json.JSONDecodeError as exc:
        raise SyntaxError_(f"invalid JSON: {exc.msg}", position=exc.pos,
                           line=exc.lineno, column=exc.colno) from None
    if not isinstance(raw, list):
        raise SyntaxError_("case file must be a JSON array", location="$")
    cases = [case_from_dict(item, i) for i, item in enumerate(raw)]
    seen: set[str] = set()
    for case in cases:
        if case.case_id in seen:
            raise DuplicateIdError(f"duplicate case_id {case.case_id!r}", case_id=case.case_id)
        seen.add(case.case_id)
    return cases


def case_to_dict(case: CaseRecord) -> dict:
    out: dict = {
        "case_id": case.case_id,
        "turns": [{"role": role, "text": text} for role, text in case.turns],
        "env": dsl.env_to_dict(case.env),
        "condition_tags": sorted(case.condition_tags),
    }
    if case.benchmark_year is not None:
        out["benchmark_year"] = case.benchmark_year
    if case.jurisdiction is not None:
        out["jurisdiction"] = case.jurisdiction
    if case.demographic_group is not None:
        out["demographic_group"] = case.demographic_group
    if case.grader_verdicts is not None:
        out["grader_verdicts"] = {k: list(v) for k, v in sorted(case.grader_verdicts.items())}
    if case.override_requests:
        out["override_requests"] = [
            {k: v for k, v in overrides.override_record_to_dict(r).items()
             if k not in ("prev_hash", "hash")}
            for r in case.override_requests
        ]
    return out


# ---------------------------------------------------------------------------
# Outcomes and reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClauseOutcome:
    clause_id: str
    applicable: bool
    met_or_triggered: dsl.TriState
    base_points: float
    adjusted_points: float
    override_ref: str | None = None
    insufficiency_flag: bool = False
    exclusion_reason: str | None = None  # set iff not applicable


@dataclass(frozen=True)
class ScoreReport:
    case_id: str
    registry_version: str
    outcomes: tuple[ClauseOutcome, ...]
    earned: float
    max_positive: float
    normalized: float | None  # None = NOT_APPLICABLE
    case_weight: float = 1.0
    trace: tuple[str, ...] = ()
    # carried case metadata so run aggregation needs no second input
    condition_tags: frozenset[str] = frozenset()
    jurisdiction: str | None = None


def normalize_score(earned: float, max_positive: float) -> float | None:
    """clamp(earned / max_positive, 0, 1); undefined when nothing was earnable."""
    if max_positive < 0:
        raise ValueError("max_positive must be nonnegative")
    if max_positive == 0:
        return None
    return min(1.0, max(0.0, earned / max_positive))


def _satisfaction(clause: reg.GuidelineClause, case: CaseRecord) -> tuple[dsl.TriState, bool]:
    """(tri-state outcome, insufficiency flag) for one applicable clause."""
    if clause.uses_verdict:
        verdicts = (case.grader_verdicts or {}).get(clause.id)
        if not verdicts:
            raise VerdictMissingError(
                f"clause {clause.id} defers to grader verdicts but case "
                f"{case.case_id} carries none",
                clause_id=clause.id,
                case_id=case.case_id,
            )
        aggregate = audits.aggregate_grader_verdicts(list(verdicts))
        if aggregate.consensus is audits.UNRESOLVED:
            return dsl.TriState.UNKNOWN, True
        return dsl.TriState.of(aggregate.consensus), False
    result = dsl.evaluate_expression(clause.condition_ast, case.env)
    return result, result is dsl.TriState.UNKNOWN


def score_case(registry: reg.Registry, ontology: overrides.OverrideOntology,
               case: CaseRecord) -> ScoreReport:
    """Score one case against every clause in the registry."""
    outcomes: list[ClauseOutcome] = []
    for entry in reg.resolve_applicable(registry, case):
        clause = entry.clause
        base = tier_weight(clause.tier, clause.polarity)
        if not entry.applicable:
            outcomes.append(ClauseOutcome(
                clause_id=clause.id,
                applicable=False,
                met_or_triggered=dsl.TriState.UNKNOWN,
                base_points=base,
                adjusted_points=0.0,
                exclusion_reason=entry.reason.value,
            ))
            continue
        met, insufficient = _satisfaction(clause, case)
        adjusted = 0.0
        override_ref = None
        if met is dsl.TriState.TRUE:
            adjusted = base
            if clause.polarity == "penalize":
                request = next(
                    (r for r in case.override_requests if r.clause_id == clause.id), None)
                if request is not None and request.reason_code in clause.sanctioned_reasons:
                    decision = overrides.apply_override(base, request, ontology, case.env)
                    if decision.accepted:
                        adjusted = decision.adjusted_points
                        override_ref = request.reason_code
        outcomes.append(ClauseOutcome(
            clause_id=clause.id,
            applicable=True,
            met_or_triggered=met,
            base_points=base,
            adjusted_points=adjusted,
            override_ref=override_ref,
            insufficiency_flag=insufficient,
        ))
    earned = sum(o.adjusted_points for o in outcomes if o.applicable)
    max_positive = sum(
        o.base_points for o in outcomes
        if o.applicable and o.base_points > 0
    )
    return ScoreReport(
        case_id=case.case_id,
        registry_version=registry.version_label,
        outcomes=tuple(outcomes),
        earned=earned,
        max_positive=max_positive,
        normalized=normalize_score(earned, max_positive),
        trace=tuple(o.clause_id for o in outcomes if o.applicable),
        condition_tags=case.condition_tags,
        jurisdiction=case.jurisdiction,
    )


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def outcome_to_dict(outcome: ClauseOutcome) -> dict:
    return {
        "clause_id": outcome.clause_id,
        "applicable": outcome.applicable,
        "met_or_triggered": outcome.met_or_triggered.value,
        "base_points": outcome.base_points,
        "adjusted_points": outcome.adjusted_points,
        "override_ref": outcome.override_ref,
        "insufficiency_flag": outcome.insufficiency_flag,
        "exclusion_reason": outcome.exclusion_reason,
    }


def score_report_to_dict(report: ScoreReport) -> dict:
    return {
        "case_id": report.case_id,
        "registry_version": report.registry_version,
        "outcomes": [outcome_to_dict(o) for o in report.outcomes],
        "earned": report.earned,
        "max_positive": report.max_positive,
        "normalized": NOT_APPLICABLE if report.normalized is None else report.normalized,
        "case_weight": report.case_weight,
        "trace": list(report.trace),
        "condition_tags": sorted(report.condition_tags),
        "jurisdiction": report.jurisdiction,
    }


def score_report_to_json(report: ScoreReport) -> str:
    return json.dumps(score_report_to_dict(report), sort_keys=True, separators=(",", ":"))


def score_report_from_dict(raw: dict) -> ScoreReport:
    outcomes = tuple(
        ClauseOutcome(
            clause_id=o["clause_id"],
            applicable=o["applicable"],
            met_or_triggered=dsl.TriState(o["met_or_triggered"]),
            base_points=float(o["base_points"]),
            adjusted_points=float(o["adjusted_points"]),
            override_ref=o.get("override_ref"),
            insufficiency_flag=o.get("insufficiency_flag", False),
            exclusion_reason=o.get("exclusion_reason"),
        )
        for o in raw["outcomes"]
    )
    normalized = raw["normalized"]
    return ScoreReport(
        case_id=raw["case_id"],
        registry_version=raw["registry_version"],
        outcomes=outcomes,
        earned=float(raw["earned"]),
        max_positive=float(raw["max_positive"]),
        normalized=None if normalized == NOT_APPLICABLE else float(normalized),
        case_weight=float(raw.get("case_weight", 1.0)),
        trace=tuple(raw.get("trace", ())),
        condition_tags=frozenset(raw.get("condition_tags", ())),
        jurisdiction=raw.get("jurisdiction"),
    )


# ---------------------------------------------------------------------------
# Run aggregation
# ---------------------------------------------------------------------------

_MAGNITUDE_TO_TIER = {3.0: "high", 2.0: "moderate", 1.0: "low"}


@dataclass(frozen=True)
class RunSummary:
    n_cases: int
    n_scored: int  # cases with a defined normalized score
    weighted_mean: float | None
    insufficiency_count: int
    per_tier: dict = field(default_factory=dict)
    per_jurisdiction: dict = field(default_factory=dict)
    per_condition: dict = field(default_factory=dict)
    case_weights: dict = field(default_factory=dict)


def case_weight_for(tags: frozenset[str], weights: dict[str, float] | None) -> float:
    """Parity weight: max over the case's condition tags, default 1.

    max (not product) so comorbid cases are not compounded.
    """
    if not weights or not tags:
        return 1.0
    return max((weights.get(tag, 1.0) for tag in tags), default=1.0)


def _weighted_mean(pairs: list[tuple[float, float]]) -> float | None:
    total = sum(w for _, w in pairs)
    if total == 0:
        return None
    return sum(v * w for v, w in pairs) / total


def aggregate_run(reports: list[ScoreReport],
                  weights: dict[str, float] | None = None) -> RunSummary:
    """Fold a run of reports into one summary (stable order by case_id)."""
    if not reports:
        raise EmptyRunError("no reports to aggregate")
    ordered = sorted(reports, key=lambda r: r.case_id)
    case_weights = {r.case_id: case_weight_for(r.condition_tags, weights) for r in ordered}
    scored = [(r.normalized, case_weights[r.case_id]) for r in ordered if r.normalized is not None]
    per_jurisdiction: dict[str, list[tuple[float, float]]] = {}
    per_condition: dict[str, list[tuple[float, float]]] = {}
    per_tier: dict[str, dict[str, float]] = {
        t: {"adjusted_points": 0.0, "max_positive": 0.0, "applicable_outcomes": 0}
        for t in reg.TIERS
    }
    insufficiency = 0
    for report in ordered:
        weight = case_weights[report.case_id]
        if report.normalized is not None:
            key = report.jurisdiction or "(none)"
            per_jurisdiction.setdefault(key, []).append((report.normalized, weight))
            for tag in sorted(report.condition_tags):
                per_condition.setdefault(tag, []).append((report.normalized, weight))
        for outcome in report.outcomes:
            if outcome.insufficiency_flag:
                insufficiency += 1
            if not outcome.applicable:
                continue
            tier = _MAGNITUDE_TO_TIER[abs(outcome.base_points)]
            bucket = per_tier[tier]
            bucket["applicable_outcomes"] += 1
            bucket["adjusted_points"] += outcome.adjusted_points
            if outcome.base_points > 0:
                bucket["max_positive"] += outcome.base_points
    return RunSummary(
        n_cases=len(ordered),
        n_scored=len(scored),
        weighted_mean=_weighted_mean(scored),
        insufficiency_count=insufficiency,
        per_tier=per_tier,
        per_jurisdiction={
            k: {"weighted_mean": _weighted_mean(v), "n": len(v)}
            for k, v in sorted(per_jurisdiction.items())
        },
        per_condition={
            k: {"weighted_mean": _weighted_mean(v), "n": len(v)}
            for k, v in sorted(per_condition.items())
        },
        case_weights=dict(sorted(case_weights.items())),
    )


def run_summary_to_dict(summary: RunSummary) -> dict:
    return {
        "n_cases": summary.n_cases,
        "n_scored": summary.n_scored,
        "weighted_mean": summary.weighted_mean,
        "insufficiency_count": summary.insufficiency_count,
        "per_tier": summary.per_tier,
        "per_jurisdiction": summary.per_jurisdiction,
        "per_condition": summary.per_condition,
        "case_weights": summary.case_weights,
    }
