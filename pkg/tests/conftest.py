from __future__ import annotations

import json
from pathlib import Path

import pytest

from guidescore import dsl, overrides, registry as reg, scoring

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def demo_registry() -> reg.Registry:
    return reg.parse_registry((FIXTURES / "registry.json").read_text())


@pytest.fixture(scope="session")
def demo_ontology() -> overrides.OverrideOntology:
    return overrides.load_ontology((FIXTURES / "ontology.json").read_text())


@pytest.fixture(scope="session")
def demo_cases() -> list[scoring.CaseRecord]:
    return scoring.load_cases((FIXTURES / "cases.json").read_text())


def clause_dict(clause_id: str = "WHO-Pneumonia-2023-Rec-3.2.1", **kwargs) -> dict:
    """Minimal valid clause object; override any field via kwargs."""
    base = {
        "id": clause_id,
        "guideline_title": "WHO Pocket Book: Pneumonia",
        "guideline_version": "2023",
        "recommendation_path": "3.2.1",
        "tier": "high",
        "polarity": "reward",
        "jurisdictions": ["GLOBAL"],
        "effective_start": "2023-01-01",
        "effective_end": "OPEN",
        "applies_when": "true",
        "condition_expr": "exists(recommends.amoxicillin)",
        "checklist_text": "Recommends oral amoxicillin as first line.",
        "trace_quote": "Oral amoxicillin is the first-line antibiotic.",
    }
    base.update(kwargs)
    return base


def registry_doc(clauses: list[dict], version_label: str = "2025-Q3",
                 benchmark_year: int = 2025) -> str:
    return json.dumps({
        "version_label": version_label,
        "benchmark_year": benchmark_year,
        "clauses": clauses,
    })


def make_registry(clauses: list[dict], **kwargs) -> reg.Registry:
    return reg.parse_registry(registry_doc(clauses, **kwargs))


def make_case(case_id: str = "case-001", *, jurisdiction: str | None = "KE",
              benchmark_year: int | None = 2025, env: dsl.EvaluationEnv | None = None,
              turns: int = 2, condition_tags: frozenset[str] = frozenset(),
              demographic_group: str | None = None,
              grader_verdicts: dict[str, tuple[bool, ...]] | None = None,
              override_requests: tuple[overrides.OverrideRecord, ...] = ()) -> scoring.CaseRecord:
    turn_list = tuple(
        ("user" if i % 2 == 0 else "assistant", f"turn {i}") for i in range(turns)
    )
    if env is None:
        env = dsl.EvaluationEnv(jurisdiction=jurisdiction)
    return scoring.CaseRecord(
        case_id=case_id,
        turns=turn_list,
        env=env,
        benchmark_year=benchmark_year,
        jurisdiction=jurisdiction,
        condition_tags=condition_tags,
        demographic_group=demographic_group,
        grader_verdicts=grader_verdicts,
        override_requests=override_requests,
    )
