"""Registry parsing, applicability resolution, tracing, and diffing."""

from __future__ import annotations

import datetime as dt
import json

import pytest

from conftest import clause_dict, make_case, make_registry, registry_doc
from guidescore import dsl, registry as reg
from guidescore.errors import (
    BadIdError,
    ClauseExpressionError,
    DuplicateIdError,
    NoJurisdictionError,
    NotFoundError,
    SyntaxError_,
)


class TestParseRegistry:
    def test_single_clause_builds_ledger(self):
        registry = make_registry([clause_dict()])
        assert len(registry.clauses) == 1
        assert len(registry.ledger) == 1
        assert registry.ledger[0].clause_id == "WHO-Pneumonia-2023-Rec-3.2.1"
        assert registry.ledger[0].registry_version == "2025-Q3"

    def test_duplicate_id(self):
        with pytest.raises(DuplicateIdError):
            make_registry([clause_dict(), clause_dict()])

    def test_bad_id_pattern(self):
        for bad in ("who-pneumonia-2023-Rec-3", "WHO-Pneumonia-23-Rec-3.2.1",
                    "WHO-Pneumonia-2023-3.2.1", "X-1"):
            with pytest.raises(BadIdError):
                make_registry([clause_dict(clause_id=bad)])

    def test_malformed_expression_names_clause_and_offset(self):
        with pytest.raises(ClauseExpressionError) as exc:
            make_registry([clause_dict(applies_when="patient(age_months <")])
        assert exc.value.details["clause_id"] == "WHO-Pneumonia-2023-Rec-3.2.1"
        assert exc.value.details["offset"] == 19

    def test_invalid_json_is_position_annotated(self):
        with pytest.raises(SyntaxError_) as exc:
            reg.parse_registry("{not json")
        assert "position" in exc.value.details

    def test_global_may_not_co_occur(self):
        with pytest.raises(SyntaxError_):
            make_registry([clause_dict(jurisdictions=["GLOBAL", "KE"])])

    def test_bad_jurisdiction_code(self):
        with pytest.raises(SyntaxError_):
            make_registry([clause_dict(jurisdictions=["KEN"])])

    def test_effective_window_must_be_ordered(self):
        with pytest.raises(SyntaxError_):
            make_registry([clause_dict(effective_start="2024-01-01",
                                       effective_end="2023-01-01")])

    def test_empty_trace_quote_rejected(self):
        with pytest.raises(SyntaxError_):
            make_registry([clause_dict(trace_quote="  ")])

    def test_verdict_sentinel_allowed_in_condition_only(self):
        registry = make_registry([clause_dict(condition_expr="verdict()")])
        assert registry.clauses[0].uses_verdict
        with pytest.raises(ClauseExpressionError):
            make_registry([clause_dict(applies_when="verdict()")])

    def test_dates_parsed(self):
        registry = make_registry([clause_dict(effective_end="2026-06-30")])
        clause = registry.clauses[0]
        assert clause.effective_start == dt.date(2023, 1, 1)
        assert clause.effective_end == dt.date(2026, 6, 30)


class TestResolveApplicable:
    def test_jurisdiction_mismatch_excluded(self):
        registry = make_registry([
            clause_dict("CDC-Influenza-2024-Rec-1.1", jurisdictions=["US"],
                        condition_expr='value(recommends.influenza.frequency) == "annual"'),
        ])
        case = make_case(jurisdiction="KE")
        [result] = reg.resolve_applicable(registry, case)
        assert not result.applicable
        assert result.reason is reg.ApplicabilityReason.JURISDICTION

    def test_global_clause_applies_anywhere(self):
        registry = make_registry([clause_dict(applies_when="true")])
        for code in ("KE", "US", "BR"):
            [result] = reg.resolve_applicable(registry, make_case(jurisdiction=code))
            assert result.applicable

    def test_expired_window(self):
        registry = make_registry([clause_dict(effective_start="2020-01-01",
                                              effective_end="2024-01-01")])
        [result] = reg.resolve_applicable(registry, make_case(benchmark_year=2025))
        assert not result.applicable
        assert result.reason is reg.ApplicabilityReason.EXPIRED

    def test_not_yet_effective(self):
        registry = make_registry([clause_dict(effective_start="2026-01-01")])
        [result] = reg.resolve_applicable(registry, make_case(benchmark_year=2025))
        assert result.reason is reg.ApplicabilityReason.NOT_YET_EFFECTIVE

    def test_unknown_applies_when_excluded_as_insufficient(self):
        registry = make_registry([clause_dict(applies_when="patient(age_months) < 60")])
        [result] = reg.resolve_applicable(registry, make_case())  # no patient facts
        assert not result.applicable
        assert result.reason is reg.ApplicabilityReason.INSUFFICIENT_CONTEXT

    def test_false_applies_when_excluded(self):
        registry = make_registry([clause_dict(applies_when="exists(suspects.sepsis)")])
        [result] = reg.resolve_applicable(registry, make_case())
        assert result.reason is reg.ApplicabilityReason.CONDITION_FALSE

    def test_missing_jurisdiction_raises_when_scoped_clauses_exist(self):
        registry = make_registry([clause_dict(jurisdictions=["US"])])
        with pytest.raises(NoJurisdictionError):
            reg.resolve_applicable(registry, make_case(jurisdiction=None))

    def test_missing_jurisdiction_fine_for_global_only_registry(self):
        registry = make_registry([clause_dict()])
        case = make_case(
            jurisdiction=None,
            env=dsl.EvaluationEnv(assertions={"recommends.amoxicillin": True}),
        )
        [result] = reg.resolve_applicable(registry, case)
        assert result.applicable

    def test_repeated_calls_identical(self):
        registry = make_registry([clause_dict(), clause_dict("WHO-Sepsis-2023-Rec-1.1",
                                                             jurisdictions=["KE"])])
        case = make_case()
        assert reg.resolve_applicable(registry, case) == reg.resolve_applicable(registry, case)

    def test_no_specific_clause_ever_crosses_jurisdiction(self, demo_registry):
        # property: a clause scoped to J never applies to a case outside J
        for code in ("KE", "US", "UG", "ZA"):
            case = make_case(jurisdiction=code)
            for result in reg.resolve_applicable(demo_registry, case):
                scope = result.clause.jurisdictions
                if result.applicable and reg.GLOBAL not in scope:
                    assert code in scope


class TestTrace:
    def test_known_id(self, demo_registry):
        record = reg.trace_clause(demo_registry, "WHO-Pneumonia-2023-Rec-3.2.1")
        assert record.guideline_title
        assert record.recommendation_path == "3.2.1"
        assert record.checklist_text
        assert record.trace_quote
        assert record.registry_version == "2025-Q3"

    def test_unknown_id(self, demo_registry):
        with pytest.raises(NotFoundError):
            reg.trace_clause(demo_registry, "X-1")

    def test_trace_exists_for_exactly_registry_ids(self, demo_registry):
        for clause in demo_registry.clauses:
            assert reg.trace_clause(demo_registry, clause.id).clause_id == clause.id


class TestDiff:
    def test_identical_registries_empty_diff(self, demo_registry):
        diff = reg.diff_registries(demo_registry, demo_registry)
        assert diff.empty
        assert "No clause changes" in diff.changelog_text

    def test_tier_change_recorded(self):
        old = make_registry([clause_dict(tier="moderate")])
        new = make_registry([clause_dict(tier="high")])
        diff = reg.diff_registries(old, new)
        assert diff.tier_changes == (("WHO-Pneumonia-2023-Rec-3.2.1", "moderate", "high"),)
        assert not diff.added and not diff.retired

    def test_retired_clause_listed(self):
        old = make_registry([clause_dict(), clause_dict("WHO-Sepsis-2023-Rec-1.1")])
        new = make_registry([clause_dict()])
        diff = reg.diff_registries(old, new)
        assert diff.retired == frozenset({"WHO-Sepsis-2023-Rec-1.1"})

    def test_added_and_retired_disjoint(self):
        old = make_registry([clause_dict()])
        new = make_registry([clause_dict("WHO-Sepsis-2023-Rec-1.1")])
        diff = reg.diff_registries(old, new)
        assert diff.added & diff.retired == frozenset()

    def test_text_change_recorded(self):
        old = make_registry([clause_dict()])
        new = make_registry([clause_dict(condition_expr="exists(recommends.act_therapy)")])
        diff = reg.diff_registries(old, new)
        assert any(field == "condition_expr" for _, field, _, _ in diff.expr_changes)


def test_registry_round_trips_through_dict(demo_registry):
    text = json.dumps(reg.registry_to_dict(demo_registry))
    again = reg.parse_registry(text)
    assert again.version_label == demo_registry.version_label
    assert [c.id for c in again.clauses] == [c.id for c in demo_registry.clauses]
    assert reg.diff_registries(demo_registry, again).empty
