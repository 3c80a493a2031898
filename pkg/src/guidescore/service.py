"""Embedded HTTP service for the audit console and CI pipelines.

JSON over HTTP/1.1 on the stdlib server. Reads (queue, stats, traces,
reports, coverage, equity, what-if) are side-effect-free; the two write
endpoints (adjudications, misgrades via adjudication disagreements) funnel
through a single lock and are persisted write-through as newline-delimited
JSON, so shutdown never loses records.
"""

from __future__ import annotations

import errno
import json
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from . import audits, dsl, overrides, registry as reg, scoring
from .errors import EngineError, NoGroupsError, NotFoundError, PortInUseError


@dataclass
class QueueItem:
    sample_id: str
    case_id: str
    clause_id: str
    machine_verdict: bool | None  # None: machine could not decide (tri-state unknown)
    unresolved_tie: bool
    disagreement_ratio: float
    turns: list[dict]
    checklist_text: str
    trace_quote: str
    adjudicated: bool = False

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "case_id": self.case_id,
            "clause_id": self.clause_id,
            "machine_verdict": self.machine_verdict,
            "unresolved_tie": self.unresolved_tie,
            "disagreement_ratio": self.disagreement_ratio,
            "turns": self.turns,
            "checklist_text": self.checklist_text,
            "trace_quote": self.trace_quote,
            "adjudicated": self.adjudicated,
        }


@dataclass
class ServiceState:
    registry: reg.Registry
    ontology: overrides.OverrideOntology
    cases: dict[str, scoring.CaseRecord]
    reports: dict[str, scoring.ScoreReport]
    queue: list[QueueItem]
    override_ledger: tuple[overrides.OverrideRecord, ...] = ()
    group_field: str = "demographic_group"
    targets: dict[str, float] | None = None
    adjudications: list[audits.AdjudicationRecord] = field(default_factory=list)
    tracker: audits.MisgradeTracker = field(default_factory=audits.MisgradeTracker)
    adjudications_path: Path | None = None
    misgrades_path: Path | None = None
    write_lock: threading.Lock = field(default_factory=threading.Lock)


def build_state(registry: reg.Registry, ontology: overrides.OverrideOntology,
                cases: list[scoring.CaseRecord],
                reports: list[scoring.ScoreReport] | None = None,
                override_ledger: tuple[overrides.OverrideRecord, ...] = (),
                rate: float = 0.05, seed: int = 0,
                group_field: str = "demographic_group",
                targets: dict[str, float] | None = None,
                out_dir: str | Path | None = None) -> ServiceState:
    """Load/score the run artifacts and draw the audit queue."""
    if reports is None:
        reports = [scoring.score_case(registry, ontology, case) for case in cases]
    by_case = {r.case_id: r for r in reports}
    sample = audits.sample_for_audit(reports, rate=rate, seed=seed)
    case_index = {c.case_id: c for c in cases}
    queue: list[QueueItem] = []
    for i, (case_id, clause_id) in enumerate(sample.items):
        case = case_index.get(case_id)
        report = by_case[case_id]
        outcome = next(o for o in report.outcomes if o.clause_id == clause_id)
        clause = registry.clause(clause_id)
        verdict: bool | None
        if outcome.met_or_triggered is dsl.TriState.UNKNOWN:
            verdict = None
        else:
            verdict = outcome.met_or_triggered is dsl.TriState.TRUE
        tie = False
        ratio = 0.0
        if clause is not None and clause.uses_verdict and case is not None:
            verdicts = (case.grader_verdicts or {}).get(clause_id)
            if verdicts:
                aggregate = audits.aggregate_grader_verdicts(list(verdicts))
                ratio = aggregate.disagreement_ratio
                tie = aggregate.consensus is audits.UNRESOLVED
        queue.append(QueueItem(
            sample_id=f"S-{i + 1:04d}",
            case_id=case_id,
            clause_id=clause_id,
            machine_verdict=verdict,
            unresolved_tie=tie,
            disagreement_ratio=ratio,
            turns=[{"role": r, "text": t} for r, t in (case.turns if case else ())],
            checklist_text=clause.checklist_text if clause else "",
            trace_quote=clause.trace_quote if clause else "",
        ))
    state = ServiceState(
        registry=registry,
        ontology=ontology,
        cases=case_index,
        reports=by_case,
        queue=queue,
        override_ledger=override_ledger,
        group_field=group_field,
        targets=targets,
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        state.adjudications_path = out / "adjudications.ndjson"
        state.misgrades_path = out / "misgrades.ndjson"
    return state


class _ApiError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


class _Handler(BaseHTTPRequestHandler):
    state: ServiceState  # injected via subclass

    # --- plumbing ---

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _send(self, status: int, payload: dict | list) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.end_headers()
        self.wfile.write(body)

    def _read_body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b"{}"
        try:
            parsed = json.loads(raw.decode("utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError):
            raise _ApiError(400, "request body must be JSON")
        if not isinstance(parsed, dict):
            raise _ApiError(400, "request body must be a JSON object")
        return parsed

    def do_OPTIONS(self):  # CORS preflight for the console
        self._send(204, {})

    def do_GET(self):
        self._route("GET")

    def do_POST(self):
        self._route("POST")

    def _route(self, method: str) -> None:
        url = urlparse(self.path)
        parts = [p for p in url.path.split("/") if p]
        try:
            if parts[:2] != ["api", "v1"]:
                raise _ApiError(404, f"unknown path {url.path}")
            rest = parts[2:]
            if method == "GET":
                self._send(*self._get(rest, parse_qs(url.query)))
            else:
                self._send(*self._post(rest))
        except _ApiError as exc:
            self._send(exc.status, {"error": exc.message})
        except NotFoundError as exc:
            self._send(404, {"error": str(exc), "code": exc.code})
        except EngineError as exc:
            self._send(422, {"error": str(exc), "code": exc.code})

    # --- GET endpoints ---

    def _get(self, rest: list[str], query: dict) -> tuple[int, dict]:
        state = self.state
        if rest == ["audit", "queue"]:
            limit = int(query.get("limit", ["50"])[0])
            pending = [item for item in state.queue if not item.adjudicated]
            return 200, {
                "items": [item.to_dict() for item in pending[:limit]],
                "pending": len(pending),
                "total": len(state.queue),
            }
        if rest == ["stats", "agreement"]:
            if not state.adjudications:
                return 200, {"n": 0, "raw_agreement": None, "kappa": None, "table": None}
            stats = audits.agreement_stats(state.adjudications)
            return 200, {
                "n": stats.n,
                "raw_agreement": stats.raw_agreement,
                "kappa": stats.kappa,
                "table": [list(row) for row in stats.table],
            }
        if len(rest) == 3 and rest[0] == "clauses" and rest[2] == "trace":
            record = reg.trace_clause(state.registry, rest[1])
            return 200, {
                "clause_id": record.clause_id,
                "guideline_title": record.guideline_title,
                "recommendation_path": record.recommendation_path,
                "checklist_text": record.checklist_text,
                "trace_quote": record.trace_quote,
                "registry_version": record.registry_version,
            }
        if len(rest) == 2 and rest[0] == "reports":
            report = state.reports.get(rest[1])
            if report is None:
                raise _ApiError(404, f"no report for case {rest[1]!r}")
            return 200, scoring.score_report_to_dict(report)
        if rest == ["coverage"]:
            report = audits.coverage_report(list(state.cases.values()), state.targets)
            return 200, audits.coverage_report_to_dict(report)
        if rest == ["equity"]:
            group_field = query.get("group_field", [state.group_field])[0]
            try:
                report = audits.equity_report(
                    state.override_ledger, list(state.cases.values()), group_field)
            except NoGroupsError as exc:
                raise _ApiError(422, str(exc))
            return 200, audits.equity_report_to_dict(report)
        raise _ApiError(404, f"unknown endpoint {'/'.join(rest)}")

    # --- POST endpoints ---

    def _post(self, rest: list[str]) -> tuple[int, dict]:
        state = self.state
        if rest == ["audit", "adjudications"]:
            body = self._read_body()
            sample_id = body.get("sample_id")
            human = body.get("human_verdict")
            if not isinstance(sample_id, str) or not isinstance(human, bool):
                raise _ApiError(422, "need sample_id (string) and human_verdict (boolean)")
            note = body.get("note", "")
            with state.write_lock:
                item = next((q for q in state.queue if q.sample_id == sample_id), None)
                if item is None:
                    raise _ApiError(404, f"unknown sample {sample_id!r}")
                if item.adjudicated:
                    raise _ApiError(409, f"sample {sample_id!r} already adjudicated")
                item.adjudicated = True
                if item.machine_verdict is None:
                    # tri-state-unknown machine outcome: the human verdict
                    # resolves the queue item but cannot feed agreement stats
                    return 201, {"adjudication": None, "misgrade_entry_id": None,
                                 "note": "machine verdict unknown; excluded from stats"}
                record = audits.AdjudicationRecord(
                    sample_id=sample_id,
                    case_id=item.case_id,
                    clause_id=item.clause_id,
                    machine_verdict=item.machine_verdict,
                    human_verdict=human,
                    note=note if isinstance(note, str) else "",
                )
                state.adjudications.append(record)
                entry = audits.record_misgrade(state.tracker, record)
                self._persist(state)
            return 201, {
                "adjudication": audits.adjudication_to_dict(record),
                "misgrade_entry_id": entry.entry_id if entry else None,
            }
        if rest == ["whatif"]:
            body = self._read_body()
            case_id = body.get("case_id")
            case = state.cases.get(case_id or "")
            if case is None:
                raise _ApiError(404, f"unknown case {case_id!r}")
            delta = body.get("env_delta") or {}
            if not isinstance(delta, dict):
                raise _ApiError(422, "env_delta must be an object")
            result = overrides.what_if_rescore(state.registry, state.ontology, case, delta)
            return 200, {
                "before": scoring.score_report_to_dict(result.before),
                "after": scoring.score_report_to_dict(result.after),
                "deltas": [
                    {
                        "clause_id": d.clause_id,
                        "points_before": d.points_before,
                        "points_after": d.points_after,
                        "delta": d.delta,
                        "applicable_before": d.applicable_before,
                        "applicable_after": d.applicable_after,
                        "exclusion_reason_after": d.exclusion_reason_after,
                    }
                    for d in result.deltas
                ],
            }
        raise _ApiError(404, f"unknown endpoint {'/'.join(rest)}")

    @staticmethod
    def _persist(state: ServiceState) -> None:
        if state.adjudications_path is not None:
            with open(state.adjudications_path, "w", encoding="utf-8") as fh:
                for record in state.adjudications:
                    fh.write(json.dumps(audits.adjudication_to_dict(record),
                                        sort_keys=True) + "\n")
        if state.misgrades_path is not None:
            state.misgrades_path.write_text(state.tracker.to_ndjson(), encoding="utf-8")


class GuidelineService:
    """Owns the HTTP server; state is immutable except the audit ledgers."""

    def __init__(self, state: ServiceState, port: int = 0, host: str = "127.0.0.1"):
        handler = type("BoundHandler", (_Handler,), {"state": state})
        try:
            self._server = ThreadingHTTPServer((host, port), handler)
        except OSError as exc:
            if exc.errno == errno.EADDRINUSE:
                raise PortInUseError(f"port {port} is already in use", port=port) from None
            raise
        self.state = state
        self.host = host
        self.port = self._server.server_address[1]
        self._thread: threading.Thread | None = None
        self._serving = False

    @property
    def base_url(self) -> str:
        return f"http://{self.host}:{self.port}"

    def start(self) -> None:
        self._serving = True
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    def serve_forever(self) -> None:
        self._serving = True
        self._server.serve_forever()

    def shutdown(self) -> None:
        with self.state.write_lock:
            _Handler._persist(self.state)
        if self._serving:
            # HTTPServer.shutdown blocks forever unless serve_forever is running
            self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)
