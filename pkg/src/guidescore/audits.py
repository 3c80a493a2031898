"""Human-in-the-loop audit machinery.

Covers the release-gate tooling around the scorer: mixture-of-experts verdict
aggregation, deterministic stratified audit sampling, machine-vs-human
agreement statistics (Cohen's kappa), equity analysis of the override ledger,
condition coverage with parity weights, and the misgrade tracker.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable

from .errors import BadRateError, BadTargetsError, EmptyInputError, NoGroupsError

if TYPE_CHECKING:  # pragma: no cover
    from .overrides import OverrideRecord
    from .scoring import CaseRecord, ScoreReport

UNRESOLVED = "UNRESOLVED"

RECOMMENDED_RATE_RANGE = (0.05, 0.10)

DEFAULT_MIN_GROUP_SIZE = 30
FLAG_RATE_RATIO = 1.5
FLAG_Z = 1.96

PARITY_WEIGHT_CAP = 5.0

EQUITY_FOOTNOTE = "z statistics are not corrected for multiple comparisons"


# ---------------------------------------------------------------------------
# Grader verdict aggregation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VerdictAggregate:
    consensus: bool | str  # True / False / UNRESOLVED
    disagreement_ratio: float
    low_confidence: bool  # single-grader panel


def aggregate_grader_verdicts(verdicts: list[bool]) -> VerdictAggregate:
    """Strict majority wins; an exact tie is UNRESOLVED (routed to humans)."""
    if not verdicts:
        raise EmptyInputError("no grader verdicts to aggregate")
    met = sum(1 for v in verdicts if v)
    unmet = len(verdicts) - met
    if met == unmet:
        return VerdictAggregate(UNRESOLVED, 0.5, False)
    consensus = met > unmet
    ratio = min(met, unmet) / len(verdicts)
    return VerdictAggregate(consensus, ratio, len(verdicts) == 1)


# ---------------------------------------------------------------------------
# Audit sampling
# ---------------------------------------------------------------------------

_TIER_ORDER = ("high", "moderate", "low")
_MAGNITUDE_TO_TIER = {3.0: "high", 2.0: "moderate", 1.0: "low"}


@dataclass(frozen=True)
class AuditSample:
    items: tuple[tuple[str, str], ...]  # (case_id, clause_id)
    warnings: tuple[str, ...] = ()


def sample_for_audit(reports: list["ScoreReport"], rate: float = 0.05,
                     seed: int = 0) -> AuditSample:
    """Draw round(rate * N) applicable outcomes without replacement.

    Sampling is a seeded pseudo-random permutation stratified by evidence
    tier with proportional allocation; leftover slots go to the highest tier
    first, so a release re-run with the same seed is byte-identical.
    """
    if not reports:
        raise EmptyInputError("no reports to sample from")
    if not 0 < rate <= 1:
        raise BadRateError(f"rate must be in (0, 1], got {rate}", rate=rate)
    warnings: list[str] = []
    lo, hi = RECOMMENDED_RATE_RANGE
    if not lo <= rate <= hi:
        warnings.append("OUT_OF_RECOMMENDED_RANGE")
    strata: dict[str, list[tuple[str, str]]] = {t: [] for t in _TIER_ORDER}
    for report in sorted(reports, key=lambda r: r.case_id):
        for outcome in report.outcomes:
            if outcome.applicable:
                tier = _MAGNITUDE_TO_TIER[abs(outcome.base_points)]
                strata[tier].append((report.case_id, outcome.clause_id))
    population = sum(len(v) for v in strata.values())
    n = round(rate * population)
    if n == 0:
        warnings.append("SAMPLE_EMPTY")
        return AuditSample(items=(), warnings=tuple(warnings))
    quotas = {t: (n * len(strata[t])) // population for t in _TIER_ORDER}
    leftover = n - sum(quotas.values())
    for tier in _TIER_ORDER:
        if leftover == 0:
            break
        room = len(strata[tier]) - quotas[tier]
        take = min(room, leftover)
        quotas[tier] += take
        leftover -= take
    rng = random.Random(seed)
    items: list[tuple[str, str]] = []
    for tier in _TIER_ORDER:
        stratum = sorted(strata[tier])
        items.extend(rng.sample(stratum, quotas[tier]))
    return AuditSample(items=tuple(items), warnings=tuple(warnings))


# ---------------------------------------------------------------------------
# Agreement statistics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AdjudicationRecord:
    sample_id: str
    case_id: str
    clause_id: str
    machine_verdict: bool
    human_verdict: bool
    note: str = ""
    timestamp: str = ""


@dataclass(frozen=True)
class AgreementStats:
    raw_agreement: float
    kappa: float
    # rows = machine (met, unmet), columns = human (met, unmet)
    table: tuple[tuple[int, int], tuple[int, int]]
    n: int


def agreement_stats(adjudications: list[AdjudicationRecord]) -> AgreementStats:
    """Raw agreement plus Cohen's kappa over the machine/human 2x2 table."""
    if not adjudications:
        raise EmptyInputError("no adjudications")
    a = sum(1 for r in adjudications if r.machine_verdict and r.human_verdict)
    b = sum(1 for r in adjudications if r.machine_verdict and not r.human_verdict)
    c = sum(1 for r in adjudications if not r.machine_verdict and r.human_verdict)
    d = sum(1 for r in adjudications if not r.machine_verdict and not r.human_verdict)
    n = a + b + c + d
    p_o = (a + d) / n
    machine_met = (a + b) / n
    human_met = (a + c) / n
    p_e = machine_met * human_met + (1 - machine_met) * (1 - human_met)
    if p_e == 1.0:
        kappa = 1.0 if p_o == 1.0 else 0.0
    else:
        kappa = (p_o - p_e) / (1.0 - p_e)
    return AgreementStats(raw_agreement=p_o, kappa=kappa, table=((a, b), (c, d)), n=n)


def adjudication_to_dict(record: AdjudicationRecord) -> dict:
    return {
        "sample_id": record.sample_id,
        "case_id": record.case_id,
        "clause_id": record.clause_id,
        "machine_verdict": record.machine_verdict,
        "human_verdict": record.human_verdict,
        "note": record.note,
        "timestamp": record.timestamp,
    }


def adjudication_from_dict(raw: dict) -> AdjudicationRecord:
    return AdjudicationRecord(
        sample_id=raw["sample_id"],
        case_id=raw["case_id"],
        clause_id=raw["clause_id"],
        machine_verdict=bool(raw["machine_verdict"]),
        human_verdict=bool(raw["human_verdict"]),
        note=raw.get("note", ""),
        timestamp=raw.get("timestamp", ""),
    )


def read_adjudications(path: str) -> list[AdjudicationRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(adjudication_from_dict(json.loads(line)))
    return records


# ---------------------------------------------------------------------------
# Equity analysis of the override ledger
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GroupStat:
    group: str
    override_count: int  # cases with at least one logged override
    case_count: int
    rate: float


@dataclass(frozen=True)
class PairStat:
    group_a: str
    group_b: str
    rate_ratio: float  # larger / smaller, >= 1
    z: float
    flagged: bool
    note: str | None = None


@dataclass(frozen=True)
class EquityReport:
    group_field: str
    groups: tuple[GroupStat, ...]
    pairs: tuple[PairStat, ...]
    min_group_size: int
    footnote: str = EQUITY_FOOTNOTE


def two_proportion_z(x1: int, n1: int, x2: int, n2: int) -> float:
    """(p1 - p2) / sqrt(p(1-p)(1/n1 + 1/n2)) with pooled p."""
    p1, p2 = x1 / n1, x2 / n2
    pooled = (x1 + x2) / (n1 + n2)
    se = math.sqrt(pooled * (1 - pooled) * (1 / n1 + 1 / n2))
    if se == 0.0:
        return 0.0
    return (p1 - p2) / se


def _rate_ratio(p1: float, p2: float) -> float:
    hi, lo = max(p1, p2), min(p1, p2)
    if hi == 0.0:
        return 1.0
    if lo == 0.0:
        return math.inf
    return hi / lo


def equity_report(ledger: Iterable["OverrideRecord"], cases: list["CaseRecord"],
                  group_field: str,
                  min_group_size: int = DEFAULT_MIN_GROUP_SIZE) -> EquityReport:
    """Accepted-override rates per group, with pairwise disparity tests.

    A pair is flagged iff both groups reach the minimum size, the rate ratio
    is >= 1.5, and |z| >= 1.96; undersized groups are reported but marked
    INSUFFICIENT_DATA instead of flagged.
    """
    by_group: dict[str, list["CaseRecord"]] = {}
    for case in cases:
        group = getattr(case, group_field, None)
        if group is not None:
            by_group.setdefault(str(group), []).append(case)
    if len(by_group) < 2:
        raise NoGroupsError(
            f"equity analysis needs at least two groups with {group_field!r} set",
            group_field=group_field,
        )
    overridden_cases = {record.case_id for record in ledger}
    groups: list[GroupStat] = []
    for label in sorted(by_group):
        members = by_group[label]
        hit = sum(1 for case in members if case.case_id in overridden_cases)
        groups.append(GroupStat(label, hit, len(members), hit / len(members)))
    pairs: list[PairStat] = []
    for i, ga in enumerate(groups):
        for gb in groups[i + 1:]:
            ratio = _rate_ratio(ga.rate, gb.rate)
            z = two_proportion_z(ga.override_count, ga.case_count,
                                 gb.override_count, gb.case_count)
            undersized = ga.case_count < min_group_size or gb.case_count < min_group_size
            flagged = (not undersized) and ratio >= FLAG_RATE_RATIO and abs(z) >= FLAG_Z
            pairs.append(PairStat(
                group_a=ga.group,
                group_b=gb.group,
                rate_ratio=ratio,
                z=z,
                flagged=flagged,
                note="INSUFFICIENT_DATA" if undersized else None,
            ))
    return EquityReport(
        group_field=group_field,
        groups=tuple(groups),
        pairs=tuple(pairs),
        min_group_size=min_group_size,
    )


def equity_report_to_dict(report: EquityReport) -> dict:
    def _num(x: float) -> float | str:
        return "INF" if math.isinf(x) else x

    return {
        "group_field": report.group_field,
        "min_group_size": report.min_group_size,
        "groups": [
            {"group": g.group, "override_count": g.override_count,
             "case_count": g.case_count, "rate": g.rate}
            for g in report.groups
        ],
        "pairs": [
            {"group_a": p.group_a, "group_b": p.group_b, "rate_ratio": _num(p.rate_ratio),
             "z": p.z, "flagged": p.flagged, "note": p.note}
            for p in report.pairs
        ],
        "footnote": report.footnote,
    }


# ---------------------------------------------------------------------------
# Coverage and parity weights
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CoverageRow:
    condition: str
    count: int
    share: float
    target: float
    parity_weight: float


@dataclass(frozen=True)
class CoverageReport:
    n_cases: int
    rows: tuple[CoverageRow, ...]
    warnings: tuple[str, ...] = ()

    @property
    def parity_weights(self) -> dict[str, float]:
        return {row.condition: row.parity_weight for row in self.rows}


def coverage_report(cases: list["CaseRecord"],
                    targets: dict[str, float] | None = None,
                    cap: float = PARITY_WEIGHT_CAP) -> CoverageReport:
    """Per-condition counts/shares and the up-weights that restore parity.

    weight = min(cap, target / share); an uncapped weight satisfies
    weight * share == target exactly, so the weighted corpus hits its target
    mix. Conditions with no cases get the cap and a NO_CASES warning.
    """
    if not cases:
        raise EmptyInputError("no cases")
    if targets is not None:
        if not targets:
            raise BadTargetsError("targets must not be empty when given")
        total = sum(targets.values())
        if total > 1.0 + 1e-9 or any(t <= 0 for t in targets.values()):
            raise BadTargetsError(
                f"targets must be positive shares summing to <= 1 (sum={total:g})")
        goal = dict(targets)
    else:
        observed = sorted({tag for case in cases for tag in case.condition_tags})
        if not observed:
            raise BadTargetsError("no condition tags present and no targets given")
        goal = {tag: 1.0 / len(observed) for tag in observed}
    n = len(cases)
    rows: list[CoverageRow] = []
    warnings: list[str] = []
    for condition in sorted(goal):
        count = sum(1 for case in cases if condition in case.condition_tags)
        share = count / n
        if share == 0.0:
            weight = cap
            warnings.append(f"NO_CASES:{condition}")
        else:
            weight = min(cap, goal[condition] / share)
        rows.append(CoverageRow(condition, count, share, goal[condition], weight))
    return CoverageReport(n_cases=n, rows=tuple(rows), warnings=tuple(warnings))


def coverage_report_to_dict(report: CoverageReport) -> dict:
    return {
        "n_cases": report.n_cases,
        "rows": [
            {"condition": r.condition, "count": r.count, "share": r.share,
             "target": r.target, "parity_weight": r.parity_weight}
            for r in report.rows
        ],
        "warnings": list(report.warnings),
        "parity_weights": report.parity_weights,
    }


# ---------------------------------------------------------------------------
# Misgrade tracker
# ---------------------------------------------------------------------------

@dataclass
class MisgradeEntry:
    entry_id: str
    case_id: str
    clause_id: str
    machine_verdict: bool
    human_verdict: bool
    status: str = "open"  # open -> resolved, one way
    note: str = ""
    count: int = 1
    sample_ids: list[str] = field(default_factory=list)


class MisgradeTracker:
    """Dedup'd log of machine/human disagreements (the public bug tracker)."""

    def __init__(self) -> None:
        self.entries: list[MisgradeEntry] = []
        self._by_key: dict[tuple[str, str], MisgradeEntry] = {}

    def resolve(self, entry_id: str) -> MisgradeEntry:
        for entry in self.entries:
            if entry.entry_id == entry_id:
                entry.status = "resolved"
                return entry
        raise EmptyInputError(f"no misgrade entry {entry_id!r}")

    def to_ndjson(self) -> str:
        return "".join(
            json.dumps(misgrade_to_dict(entry), sort_keys=True) + "\n"
            for entry in self.entries
        )


def misgrade_to_dict(entry: MisgradeEntry) -> dict:
    return {
        "entry_id": entry.entry_id,
        "case_id": entry.case_id,
        "clause_id": entry.clause_id,
        "machine_verdict": entry.machine_verdict,
        "human_verdict": entry.human_verdict,
        "status": entry.status,
        "note": entry.note,
        "count": entry.count,
        "sample_ids": list(entry.sample_ids),
    }


def record_misgrade(tracker: MisgradeTracker,
                    adjudication: AdjudicationRecord) -> MisgradeEntry | None:
    """File a disagreement; agreements are a no-op (returns None)."""
    if adjudication.machine_verdict == adjudication.human_verdict:
        return None
    key = (adjudication.case_id, adjudication.clause_id)
    existing = tracker._by_key.get(key)
    if existing is not None:
        existing.count += 1
        existing.sample_ids.append(adjudication.sample_id)
        return existing
    entry = MisgradeEntry(
        entry_id=f"MG-{len(tracker.entries) + 1:04d}",
        case_id=adjudication.case_id,
        clause_id=adjudication.clause_id,
        machine_verdict=adjudication.machine_verdict,
        human_verdict=adjudication.human_verdict,
        note=adjudication.note,
        sample_ids=[adjudication.sample_id],
    )
    tracker.entries.append(entry)
    tracker._by_key[key] = entry
    return entry
