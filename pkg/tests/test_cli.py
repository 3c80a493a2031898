"""CLI contract: exit codes, artifacts, and thin-mapping equivalence."""

from __future__ import annotations

import json

import pytest

from conftest import clause_dict, registry_doc
from guidescore import overrides, registry as reg, scoring
from guidescore.cli import execute


@pytest.fixture()
def paths(fixtures_dir):
    return {
        "registry": str(fixtures_dir / "registry.json"),
        "ontology": str(fixtures_dir / "ontology.json"),
        "cases": str(fixtures_dir / "cases.json"),
        "revisions": str(fixtures_dir / "revisions.json"),
    }


class TestScore:
    def test_happy_path_writes_report(self, paths, tmp_path):
        out = tmp_path / "report.json"
        result = execute(["score", "--registry", paths["registry"],
                          "--ontology", paths["ontology"],
                          "--cases", paths["cases"], "--out", str(out)])
        assert result.exit_code == 0
        assert str(out) in result.artifacts
        payload = json.loads(out.read_text())
        assert payload["registry_version"] == "2025-Q3"
        assert len(payload["reports"]) == 6

    def test_artifact_equals_direct_engine_output(self, paths, tmp_path,
                                                  demo_registry, demo_ontology, demo_cases):
        # golden-file equivalence: no scoring logic may live in the CLI
        out = tmp_path / "report.json"
        execute(["score", "--registry", paths["registry"], "--ontology", paths["ontology"],
                 "--cases", paths["cases"], "--out", str(out)])
        payload = json.loads(out.read_text())
        direct = [scoring.score_report_to_dict(
            scoring.score_case(demo_registry, demo_ontology, case)) for case in demo_cases]
        assert payload["reports"] == direct

    def test_ledger_written_and_verifies(self, paths, tmp_path):
        ledger_path = tmp_path / "ledger.ndjson"
        execute(["score", "--registry", paths["registry"], "--ontology", paths["ontology"],
                 "--cases", paths["cases"], "--ledger", str(ledger_path)])
        ledger = overrides.read_ledger(str(ledger_path))
        assert len(ledger) == 1
        assert ledger[0].reason_code == "BETA_LACTAM_SHORTAGE"
        assert overrides.verify_ledger(ledger) == (True, None)


class TestValidate:
    def test_valid_inputs(self, paths):
        result = execute(["validate", "--registry", paths["registry"],
                          "--ontology", paths["ontology"], "--cases", paths["cases"]])
        assert result.exit_code == 0
        assert not [d for d in result.diagnostics if d[0] == "error"]

    def test_duplicate_ids_exit_2(self, tmp_path):
        doc = registry_doc([clause_dict(), clause_dict()])
        bad = tmp_path / "dup.json"
        bad.write_text(doc)
        result = execute(["validate", "--registry", str(bad)])
        assert result.exit_code == 2
        [diag] = [d for d in result.diagnostics if d[0] == "error"]
        assert "E_DUP_ID" in diag[1]
        assert "WHO-Pneumonia-2023-Rec-3.2.1" in diag[1]

    def test_missing_file_exit_2(self):
        result = execute(["validate", "--registry", "/nonexistent/registry.json"])
        assert result.exit_code == 2


class TestLint:
    def _cases_file(self, tmp_path, multi, total):
        cases = []
        for i in range(total):
            n_turns = 3 if i < multi else 2
            turns = [{"role": "user" if j % 2 == 0 else "assistant", "text": f"t{j}"}
                     for j in range(n_turns)]
            cases.append({"case_id": f"case-{i:03d}", "benchmark_year": 2025,
                          "jurisdiction": "KE", "turns": turns})
        path = tmp_path / "cases.json"
        path.write_text(json.dumps(cases))
        return str(path)

    def test_gate_failure_is_exit_1(self, tmp_path):
        result = execute(["lint", "--cases", self._cases_file(tmp_path, 40, 100)])
        assert result.exit_code == 1  # distinct from input errors (2)

    def test_gate_pass_is_exit_0(self, tmp_path):
        result = execute(["lint", "--cases", self._cases_file(tmp_path, 55, 100)])
        assert result.exit_code == 0


class TestMigrate:
    def test_writes_registry_and_changelog(self, paths, tmp_path):
        out = tmp_path / "registry-2025-Q4.json"
        result = execute(["migrate", "--registry", paths["registry"],
                          "--revisions", paths["revisions"], "--out", str(out)])
        assert result.exit_code == 0
        new = reg.parse_registry(out.read_text())
        assert new.version_label == "2025-Q4"
        assert new.clause("WHO-Malaria-2025-Rec-4.1") is not None
        assert new.clause("CDC-Influenza-2024-Rec-1.1") is None
        changelog = tmp_path / "registry-2025-Q4.changelog.md"
        assert changelog.exists()
        assert "Evidence tier changes" in changelog.read_text()


class TestRecalc:
    def test_round_trip(self, paths, tmp_path, demo_registry, demo_ontology, demo_cases):
        with open(paths["cases"]) as fh:
            cases_raw = json.load(fh)
        reports = [scoring.score_report_to_dict(
            scoring.score_case(demo_registry, demo_ontology, c)) for c in demo_cases]
        archive = [{"case": c, "report": r} for c, r in zip(cases_raw, reports)]
        archive_path = tmp_path / "archive.json"
        archive_path.write_text(json.dumps(archive))
        new_registry = tmp_path / "new_registry.json"
        execute(["migrate", "--registry", paths["registry"],
                 "--revisions", paths["revisions"], "--out", str(new_registry)])
        out = tmp_path / "recalc.json"
        result = execute(["recalc", "--registry", str(new_registry),
                          "--ontology", paths["ontology"],
                          "--archive", str(archive_path), "--out", str(out)])
        assert result.exit_code == 0
        records = json.loads(out.read_text())
        assert len(records) == 6
        by_id = {r["case_id"]: r for r in records}
        # the US immunization case lost its only applicable clause (retired)
        assert by_id["case-immunization-us-002"]["new_score"]["normalized"] == "NOT_APPLICABLE"
        assert any("retired" in n for n in by_id["case-immunization-us-002"]["notes"])


class TestAuditCommands:
    def _report_file(self, paths, tmp_path):
        out = tmp_path / "report.json"
        execute(["score", "--registry", paths["registry"], "--ontology", paths["ontology"],
                 "--cases", paths["cases"], "--out", str(out)])
        return str(out)

    def test_sample_deterministic(self, paths, tmp_path):
        reports = self._report_file(paths, tmp_path)
        out1, out2 = tmp_path / "s1.json", tmp_path / "s2.json"
        r1 = execute(["audit", "sample", "--reports", reports, "--rate", "0.5",
                      "--seed", "42", "--out", str(out1)])
        r2 = execute(["audit", "sample", "--reports", reports, "--rate", "0.5",
                      "--seed", "42", "--out", str(out2)])
        assert r1.exit_code == r2.exit_code == 0
        assert out1.read_bytes() == out2.read_bytes()
        assert any("OUT_OF_RECOMMENDED_RANGE" in d[1] for d in r1.diagnostics)

    def test_agreement(self, tmp_path):
        records = [
            {"sample_id": f"s{i}", "case_id": f"c{i}", "clause_id": "WHO-X-2023-Rec-1",
             "machine_verdict": True, "human_verdict": i % 2 == 0}
            for i in range(4)
        ]
        path = tmp_path / "adj.ndjson"
        path.write_text("\n".join(json.dumps(r) for r in records) + "\n")
        out = tmp_path / "agreement.json"
        result = execute(["audit", "agreement", "--adjudications", str(path),
                          "--out", str(out)])
        assert result.exit_code == 0
        stats = json.loads(out.read_text())
        assert stats["raw_agreement"] == 0.5


class TestMisc:
    def test_unknown_command_exit_2(self):
        assert execute(["frobnicate"]).exit_code == 2

    def test_no_command_exit_2(self):
        assert execute([]).exit_code == 2

    def test_trace_known(self, paths, capsys):
        result = execute(["trace", "--registry", paths["registry"],
                          "WHO-Pneumonia-2023-Rec-3.2.1"])
        assert result.exit_code == 0
        assert "2025-Q3" in capsys.readouterr().out

    def test_trace_unknown_exit_2(self, paths):
        result = execute(["trace", "--registry", paths["registry"], "X-1"])
        assert result.exit_code == 2

    def test_coverage_with_targets(self, paths, tmp_path):
        targets = tmp_path / "targets.json"
        targets.write_text(json.dumps({"hiv": 0.10, "malaria": 0.10}))
        out = tmp_path / "coverage.json"
        result = execute(["coverage", "--cases", paths["cases"],
                          "--targets", str(targets), "--out", str(out)])
        assert result.exit_code == 0
        payload = json.loads(out.read_text())
        assert {"NO_CASES:hiv", "NO_CASES:malaria"} <= set(payload["warnings"])

    def test_equity_from_score_ledger(self, paths, tmp_path):
        ledger = tmp_path / "ledger.ndjson"
        execute(["score", "--registry", paths["registry"], "--ontology", paths["ontology"],
                 "--cases", paths["cases"], "--ledger", str(ledger)])
        result = execute(["equity", "--cases", paths["cases"], "--ledger", str(ledger),
                          "--group-field", "demographic_group"])
        assert result.exit_code == 0  # demo groups are tiny: reported, not flagged
