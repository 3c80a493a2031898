"""Tier weights, case scoring, normalization, and run aggregation."""

from __future__ import annotations

import json

import pytest

from conftest import clause_dict, make_case, make_registry
from guidescore import dsl, scoring
from guidescore.errors import DuplicateIdError, EmptyRunError, SyntaxError_, VerdictMissingError
from guidescore.overrides import EMPTY_ONTOLOGY, OverrideRecord, load_ontology
from guidescore.scoring import (
    NOT_APPLICABLE,
    aggregate_run,
    load_cases,
    normalize_score,
    score_case,
    score_report_to_dict,
    score_report_to_json,
    tier_weight,
)

WARD7 = "Amoxicillin unavailable on Ward 7; used doxycycline per hospital policy PH-ABX-2024-14"


class TestTierWeight:
    # the full six-pair table: high/strong +-3, moderate +-2, low/conditional +-1
    @pytest.mark.parametrize("tier,polarity,expected", [
        ("high", "reward", 3.0),
        ("high", "penalize", -3.0),     # early antibiotics for sepsis
        ("moderate", "reward", 2.0),    # dexamethasone for croup
        ("moderate", "penalize", -2.0),
        ("low", "reward", 1.0),         # zinc for the common cold
        ("low", "penalize", -1.0),
    ])
    def test_table(self, tier, polarity, expected):
        assert tier_weight(tier, polarity) == expected

    def test_unknown_tier(self):
        with pytest.raises(ValueError):
            tier_weight("anecdotal", "reward")


class TestNormalize:
    def test_half(self):
        assert normalize_score(2.5, 5.0) == 0.5

    def test_lower_clamp(self):
        assert normalize_score(-3.0, 5.0) == 0.0

    def test_not_applicable(self):
        assert normalize_score(0.0, 0.0) is None

    def test_upper_clamp(self):
        assert normalize_score(7.0, 5.0) == 1.0


def composite_fixture():
    """Met high reward (+3), unmet moderate reward (0 of +2), high penalty
    triggered but softened by a sanctioned shortage override (-0.5 of -3)."""
    registry = make_registry([
        clause_dict("WHO-Pneumonia-2023-Rec-3.2.1",
                    condition_expr="exists(assess.danger_signs)"),
        clause_dict("WHO-Pneumonia-2023-Rec-3.2.4", tier="moderate",
                    condition_expr="exists(recommends.followup_48h)"),
        clause_dict("WHO-Pneumonia-2023-Rec-3.2.2", polarity="penalize",
                    condition_expr="not exists(recommends.amoxicillin)",
                    sanctioned_reasons=["BETA_LACTAM_SHORTAGE"]),
    ])
    ontology = load_ontology(json.dumps([{
        "reason_code": "BETA_LACTAM_SHORTAGE",
        "description": "stock-out permits an alternative-class substitute",
        "precondition": 'formulary(amoxicillin) == "shortage"',
        "adjusted_penalty": -0.5,
        "applicable_clause_ids": ["WHO-Pneumonia-2023-Rec-3.2.2"],
    }]))
    case = make_case(
        env=dsl.EvaluationEnv(
            assertions={"assess.danger_signs": True, "recommends.doxycycline": True},
            formulary={"amoxicillin": "shortage"},
            jurisdiction="KE",
        ),
        override_requests=(OverrideRecord(
            reason_code="BETA_LACTAM_SHORTAGE",
            clause_id="WHO-Pneumonia-2023-Rec-3.2.2",
            justification=WARD7,
            timestamp="2025-03-14T09:30:00Z",
            case_id="case-001",
        ),),
    )
    return registry, ontology, case


class TestScoreCase:
    def test_composite_override_case(self):
        # independent spreadsheet arithmetic: earned = 3 + 0 - 0.5 = 2.5,
        # max = 3 + 2 = 5, normalized = 2.5 / 5 = 0.5
        registry, ontology, case = composite_fixture()
        report = score_case(registry, ontology, case)
        assert report.earned == 2.5
        assert report.max_positive == 5.0
        assert report.normalized == 0.5
        by_id = {o.clause_id: o for o in report.outcomes}
        assert by_id["WHO-Pneumonia-2023-Rec-3.2.1"].adjusted_points == 3.0
        assert by_id["WHO-Pneumonia-2023-Rec-3.2.4"].adjusted_points == 0.0
        penalized = by_id["WHO-Pneumonia-2023-Rec-3.2.2"]
        assert penalized.adjusted_points == -0.5
        assert penalized.base_points == -3.0
        assert penalized.override_ref == "BETA_LACTAM_SHORTAGE"

    def test_all_reward_met_no_penalties(self):
        registry = make_registry([clause_dict()])
        case = make_case(env=dsl.EvaluationEnv(
            assertions={"recommends.amoxicillin": True}, jurisdiction="KE"))
        report = score_case(registry, EMPTY_ONTOLOGY, case)
        assert report.normalized == 1.0

    def test_no_applicable_clauses_not_applicable(self):
        registry = make_registry([clause_dict(jurisdictions=["US"])])
        report = score_case(registry, EMPTY_ONTOLOGY, make_case(jurisdiction="KE"))
        assert report.normalized is None
        assert report.earned == 0.0
        assert score_report_to_dict(report)["normalized"] == NOT_APPLICABLE

    def test_unknown_satisfaction_scores_zero_with_flag(self):
        registry = make_registry([
            clause_dict(condition_expr='value(recommends.duration) >= 5 days'),
        ])
        report = score_case(registry, EMPTY_ONTOLOGY, make_case())
        [outcome] = report.outcomes
        assert outcome.adjusted_points == 0.0
        assert outcome.insufficiency_flag
        assert report.max_positive == 3.0

    def test_unsanctioned_reason_keeps_full_penalty(self):
        registry, ontology, case = composite_fixture()
        # clause no longer sanctions the reason; full -3 stands
        registry = make_registry([
            clause_dict("WHO-Pneumonia-2023-Rec-3.2.2", polarity="penalize",
                        condition_expr="not exists(recommends.amoxicillin)",
                        sanctioned_reasons=[]),
        ])
        report = score_case(registry, ontology, case)
        [outcome] = report.outcomes
        assert outcome.adjusted_points == -3.0
        assert outcome.override_ref is None

    def test_verdict_clause_uses_grader_majority(self):
        registry = make_registry([clause_dict(condition_expr="verdict()")])
        case = make_case(grader_verdicts={"WHO-Pneumonia-2023-Rec-3.2.1": (True, True, False)})
        report = score_case(registry, EMPTY_ONTOLOGY, case)
        assert report.outcomes[0].adjusted_points == 3.0

    def test_verdict_tie_is_unknown(self):
        registry = make_registry([clause_dict(condition_expr="verdict()")])
        case = make_case(grader_verdicts={"WHO-Pneumonia-2023-Rec-3.2.1": (True, False)})
        report = score_case(registry, EMPTY_ONTOLOGY, case)
        assert report.outcomes[0].adjusted_points == 0.0
        assert report.outcomes[0].insufficiency_flag

    def test_verdict_missing_raises(self):
        registry = make_registry([clause_dict(condition_expr="verdict()")])
        with pytest.raises(VerdictMissingError):
            score_case(registry, EMPTY_ONTOLOGY, make_case())

    def test_excluded_clause_contributes_nothing(self):
        registry = make_registry([
            clause_dict(),
            clause_dict("CDC-Influenza-2024-Rec-1.1", jurisdictions=["US"]),
        ])
        case = make_case(env=dsl.EvaluationEnv(
            assertions={"recommends.amoxicillin": True}, jurisdiction="KE"))
        report = score_case(registry, EMPTY_ONTOLOGY, case)
        assert report.max_positive == 3.0
        assert report.earned == 3.0
        excluded = [o for o in report.outcomes if not o.applicable]
        assert len(excluded) == 1
        assert excluded[0].exclusion_reason == "JURISDICTION"
        assert excluded[0].clause_id not in report.trace

    def test_deterministic_byte_identical(self):
        registry, ontology, case = composite_fixture()
        first = score_report_to_json(score_case(registry, ontology, case))
        second = score_report_to_json(score_case(registry, ontology, case))
        assert first == second


class TestCaseLoading:
    def test_loads_demo_cases(self, demo_cases):
        assert len(demo_cases) == 6
        assert demo_cases[0].case_id == "case-pneumonia-ke-001"
        assert demo_cases[0].env.patient["age_months"] == dsl.Quantity(36.0)

    def test_duplicate_case_id(self):
        doc = json.dumps([
            {"case_id": "x", "turns": [{"role": "user", "text": "hi"}]},
            {"case_id": "x", "turns": [{"role": "user", "text": "hi"}]},
        ])
        with pytest.raises(DuplicateIdError):
            load_cases(doc)

    def test_roles_must_alternate_from_user(self):
        doc = json.dumps([{
            "case_id": "x",
            "turns": [{"role": "assistant", "text": "hello"}],
        }])
        with pytest.raises(SyntaxError_):
            load_cases(doc)

    def test_empty_turns_rejected(self):
        doc = json.dumps([{"case_id": "x", "turns": []}])
        with pytest.raises(SyntaxError_):
            load_cases(doc)


class TestAggregateRun:
    def _report(self, case_id: str, normalized: float | None,
                tags: frozenset[str] = frozenset()) -> scoring.ScoreReport:
        earned = 0.0 if normalized is None else normalized * 2.0
        return scoring.ScoreReport(
            case_id=case_id,
            registry_version="2025-Q3",
            outcomes=(),
            earned=earned,
            max_positive=0.0 if normalized is None else 2.0,
            normalized=normalized,
            condition_tags=tags,
        )

    def test_single_report_identity(self):
        summary = aggregate_run([self._report("a", 0.5)])
        assert summary.weighted_mean == 0.5

    def test_weighted_mean_hand_checked(self):
        # (1.0 * 1 + 0.0 * 3) / (1 + 3) = 0.25
        reports = [
            self._report("a", 1.0),
            self._report("b", 0.0, tags=frozenset({"malaria"})),
        ]
        summary = aggregate_run(reports, weights={"malaria": 3.0})
        assert summary.weighted_mean == 0.25
        assert summary.case_weights == {"a": 1.0, "b": 3.0}

    def test_empty_run_raises(self):
        with pytest.raises(EmptyRunError):
            aggregate_run([])

    def test_not_applicable_excluded(self):
        summary = aggregate_run([self._report("a", 1.0), self._report("b", None)])
        assert summary.weighted_mean == 1.0
        assert summary.n_scored == 1
        assert summary.n_cases == 2

    def test_comorbid_weight_uses_max_not_product(self):
        reports = [self._report("a", 1.0, tags=frozenset({"hiv", "malaria"}))]
        summary = aggregate_run(reports, weights={"hiv": 2.0, "malaria": 3.0})
        assert summary.case_weights["a"] == 3.0

    def test_demo_run_breakdowns(self, demo_registry, demo_ontology, demo_cases):
        reports = [score_case(demo_registry, demo_ontology, c) for c in demo_cases]
        summary = aggregate_run(reports)
        assert summary.n_cases == 6
        assert "KE" in summary.per_jurisdiction
        assert "sepsis" in summary.per_condition
        # the tie case carries one insufficiency flag
        assert summary.insufficiency_count >= 1


class TestMonotonicity:
    def _base(self):
        registry = make_registry([clause_dict()])
        case = make_case(env=dsl.EvaluationEnv(
            assertions={"recommends.amoxicillin": True}, jurisdiction="KE"))
        return registry, case

    def test_adding_met_reward_never_decreases(self):
        registry, case = self._base()
        before = score_case(registry, EMPTY_ONTOLOGY, case)
        bigger = make_registry([
            clause_dict(),
            clause_dict("WHO-Pneumonia-2023-Rec-9.9", tier="low",
                        condition_expr="exists(recommends.amoxicillin)"),
        ])
        after = score_case(bigger, EMPTY_ONTOLOGY, case)
        assert after.normalized >= before.normalized

    def test_adding_unmet_reward_never_increases(self):
        registry, case = self._base()
        before = score_case(registry, EMPTY_ONTOLOGY, case)
        bigger = make_registry([
            clause_dict(),
            clause_dict("WHO-Pneumonia-2023-Rec-9.9", tier="moderate",
                        condition_expr="exists(recommends.zinc)"),
        ])
        after = score_case(bigger, EMPTY_ONTOLOGY, case)
        assert after.normalized <= before.normalized

    def test_adding_triggered_penalty_never_increases(self):
        registry, case = self._base()
        before = score_case(registry, EMPTY_ONTOLOGY, case)
        bigger = make_registry([
            clause_dict(),
            clause_dict("WHO-Pneumonia-2023-Rec-9.9", polarity="penalize",
                        condition_expr="not exists(recommends.zinc)"),
        ])
        after = score_case(bigger, EMPTY_ONTOLOGY, case)
        assert after.normalized <= before.normalized
