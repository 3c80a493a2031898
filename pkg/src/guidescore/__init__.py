"""Guideline-anchored reward engine.

Scores benchmark cases against version-controlled, evidence-tiered clinical
guideline clauses, with jurisdiction-aware resolution, contextual override
logic, registry migration with historical recalculation, and audit/equity/
coverage reporting.
"""

from .audits import (
    AdjudicationRecord,
    AgreementStats,
    AuditSample,
    CoverageReport,
    EquityReport,
    MisgradeEntry,
    MisgradeTracker,
    aggregate_grader_verdicts,
    agreement_stats,
    coverage_report,
    equity_report,
    record_misgrade,
    sample_for_audit,
)
from .dsl import (
    EvaluationEnv,
    Expression,
    Quantity,
    TriState,
    evaluate_expression,
    format_expression,
    parse_expression,
)
from .lifecycle import (
    LintReport,
    RecalculatedReport,
    lint_dataset,
    migrate_registry,
    recalculate_history,
)
from .overrides import (
    OverrideOntology,
    OverrideRecord,
    WhatIfResult,
    append_override,
    apply_override,
    load_ontology,
    verify_ledger,
    what_if_rescore,
)
from .registry import (
    ApplicabilityReason,
    GuidelineClause,
    MigrationDiff,
    Registry,
    TraceRecord,
    diff_registries,
    parse_registry,
    resolve_applicable,
    trace_clause,
)
from .scoring import (
    NOT_APPLICABLE,
    CaseRecord,
    ClauseOutcome,
    RunSummary,
    ScoreReport,
    aggregate_run,
    load_cases,
    normalize_score,
    score_case,
    tier_weight,
)

__version__ = "0.1.0"
