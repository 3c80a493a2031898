#!/usr/bin/env python3
"""Record API fixtures for the console's contract tests.

Spins up the engine's HTTP service on an ephemeral port, replays the
scenarios the console tests need, and saves the raw response bodies under
frontend/fixtures/. The console never imports the engine: these recordings
are its only contact surface, refreshed by re-running this script.

Usage: python3 scripts/record_fixtures.py   (from frontend/, engine installed)
"""

from __future__ import annotations

import json
import sys
import urllib.request
from pathlib import Path

from guidescore import overrides, registry as reg, scoring, service

ROOT = Path(__file__).resolve().parent.parent          # frontend/
PKG = ROOT.parent                                      # repo root
FIXTURES_IN = PKG / "fixtures"
FIXTURES_OUT = ROOT / "fixtures"


def fresh_service() -> service.GuidelineService:
    registry = reg.parse_registry((FIXTURES_IN / "registry.json").read_text())
    ontology = overrides.load_ontology((FIXTURES_IN / "ontology.json").read_text())
    cases = scoring.load_cases((FIXTURES_IN / "cases.json").read_text())
    state = service.build_state(registry, ontology, cases, rate=1.0, seed=42)
    srv = service.GuidelineService(state, port=0)
    srv.start()
    return srv


def call(base: str, method: str, path: str, body: dict | None = None) -> dict:
    data = json.dumps(body).encode() if body is not None else None
    req = urllib.request.Request(base + path, data=data, method=method,
                                 headers={"Content-Type": "application/json"})
    with urllib.request.urlopen(req, timeout=10) as resp:
        return json.load(resp)


def save(name: str, payload: dict) -> None:
    path = FIXTURES_OUT / name
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    print(f"recorded {path.relative_to(ROOT)}")


def find_item(queue: dict, case_id: str, clause_id: str) -> dict:
    return next(i for i in queue["items"]
                if i["case_id"] == case_id and i["clause_id"] == clause_id)


def main() -> int:
    FIXTURES_OUT.mkdir(exist_ok=True)

    # --- session A: queue, empty stats, a disagreement, refreshed stats ---
    srv = fresh_service()
    try:
        base = srv.base_url
        queue = call(base, "GET", "/api/v1/audit/queue?limit=50")
        save("queue.json", queue)
        save("agreement_empty.json", call(base, "GET", "/api/v1/stats/agreement"))
        save("trace_3_2_2.json",
             call(base, "GET", "/api/v1/clauses/WHO-Pneumonia-2023-Rec-3.2.2/trace"))
        save("report_006.json", call(base, "GET", "/api/v1/reports/case-pneumonia-ke-006"))

        sepsis = find_item(queue, "case-sepsis-ke-004", "WHO-Sepsis-2023-Rec-1.1")
        disagree = call(base, "POST", "/api/v1/audit/adjudications", {
            "sample_id": sepsis["sample_id"],
            "human_verdict": False,
            "note": "antibiotics advised only conditionally; does not meet the clause",
        })
        save("adjudication_disagree.json", disagree)
        save("agreement_after_disagree.json", call(base, "GET", "/api/v1/stats/agreement"))
    finally:
        srv.shutdown()

    # --- session B (fresh ledgers): an agreement ---
    srv = fresh_service()
    try:
        base = srv.base_url
        queue = call(base, "GET", "/api/v1/audit/queue?limit=50")
        danger = find_item(queue, "case-pneumonia-ke-001", "WHO-Pneumonia-2023-Rec-3.2.1")
        agree = call(base, "POST", "/api/v1/audit/adjudications", {
            "sample_id": danger["sample_id"], "human_verdict": True,
        })
        save("adjudication_agree.json", agree)
        save("agreement_after_agree.json", call(base, "GET", "/api/v1/stats/agreement"))

        # --- what-if scenarios on the sandbox case (baseline: amoxicillin available) ---
        save("whatif_identity.json", call(base, "POST", "/api/v1/whatif", {
            "case_id": "case-pneumonia-ke-006", "env_delta": {}}))
        save("whatif_shortage.json", call(base, "POST", "/api/v1/whatif", {
            "case_id": "case-pneumonia-ke-006",
            "env_delta": {"formulary": {"amoxicillin": "shortage"}}}))
        save("whatif_age_out_of_scope.json", call(base, "POST", "/api/v1/whatif", {
            "case_id": "case-pneumonia-ke-006",
            "env_delta": {"patient": {"age_months": 120}}}))
    finally:
        srv.shutdown()
    print("done")
    return 0


if __name__ == "__main__":
    sys.exit(main())
