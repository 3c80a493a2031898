"""Command-line entry point.

Every command is a thin mapping onto exactly one engine operation; no scoring
logic lives here. Exit codes: 0 ok, 1 a gate or check failed, 2 input error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import audits, lifecycle, overrides, registry as reg, scoring, service
from .errors import EngineError


@dataclass
class CommandResult:
    exit_code: int  # 0 ok, 1 gate/check failure, 2 input error
    diagnostics: list[tuple[str, str, str]] = field(default_factory=list)  # (severity, msg, loc)
    artifacts: list[str] = field(default_factory=list)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="guidescore",
        description="Guideline-anchored reward engine",
    )
    sub = parser.add_subparsers(dest="command")

    def add(name: str, help_: str, *flags: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_)
        for flag in flags:
            if flag == "--seed":
                p.add_argument(flag, type=int, default=0)
            elif flag == "--rate":
                p.add_argument(flag, type=float, default=0.05)
            elif flag == "--port":
                p.add_argument(flag, type=int, default=8645)
            else:
                p.add_argument(flag)
        return p

    add("validate", "validate registry/ontology/case documents",
        "--registry", "--ontology", "--cases")
    add("score", "score a case file against a registry",
        "--registry", "--ontology", "--cases", "--targets", "--out", "--ledger")
    add("migrate", "apply a revision document to a registry",
        "--registry", "--revisions", "--out")
    add("recalc", "rescore an archive under a new registry",
        "--registry", "--ontology", "--archive", "--out")
    add("lint", "dataset checks incl. the multi-turn gate",
        "--cases", "--registry", "--out")
    add("coverage", "condition coverage and parity weights",
        "--cases", "--targets", "--out")
    add("equity", "override-rate bias analysis",
        "--cases", "--ledger", "--group-field", "--out")
    add("trace", "print the guideline trace for a clause id",
        "--registry").add_argument("clause_id")
    audit = sub.add_parser("audit", help="audit sampling and agreement stats")
    audit_sub = audit.add_subparsers(dest="audit_command")
    sample = audit_sub.add_parser("sample", help="draw a deterministic audit sample")
    sample.add_argument("--reports", required=True)
    sample.add_argument("--rate", type=float, default=0.05)
    sample.add_argument("--seed", type=int, default=0)
    sample.add_argument("--out")
    agreement = audit_sub.add_parser("agreement", help="machine-vs-human agreement stats")
    agreement.add_argument("--adjudications", required=True)
    agreement.add_argument("--out")
    serve = add("serve", "run the HTTP service for the audit console",
                "--registry", "--ontology", "--cases", "--reports", "--ledger",
                "--targets", "--group-field", "--out", "--port", "--rate", "--seed")
    serve.add_argument("--host", default="127.0.0.1")
    return parser


def _read(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _write_json(path: str, payload: object, result: CommandResult) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")
    result.artifacts.append(path)


def _load_targets(path: str | None) -> dict[str, float] | None:
    if path is None:
        return None
    raw = json.loads(_read(path))
    if not isinstance(raw, dict):
        raise EngineError("targets file must be a JSON object of condition -> share")
    return {str(k): float(v) for k, v in raw.items()}


def _load_reports_artifact(path: str) -> list[scoring.ScoreReport]:
    raw = json.loads(_read(path))
    rows = raw["reports"] if isinstance(raw, dict) else raw
    return [scoring.score_report_from_dict(r) for r in rows]


# ---------------------------------------------------------------------------
# Command bodies
# ---------------------------------------------------------------------------

def _cmd_validate(args, result: CommandResult) -> None:
    checked = 0
    if args.registry:
        registry = reg.parse_registry(_read(args.registry))
        result.diagnostics.append(
            ("info", f"registry {registry.version_label}: {len(registry.clauses)} clauses, "
                     f"{len(registry.ledger)} trace records", args.registry))
        checked += 1
    if args.ontology:
        ontology = overrides.load_ontology(_read(args.ontology))
        result.diagnostics.append(
            ("info", f"ontology: {len(ontology.entries)} sanctioned reasons", args.ontology))
        checked += 1
    if args.cases:
        cases = scoring.load_cases(_read(args.cases))
        result.diagnostics.append(("info", f"{len(cases)} cases", args.cases))
        checked += 1
    if checked == 0:
        raise EngineError("nothing to validate: pass --registry, --ontology, or --cases")


def _cmd_score(args, result: CommandResult) -> None:
    registry = reg.parse_registry(_read(args.registry))
    ontology = (overrides.load_ontology(_read(args.ontology))
                if args.ontology else overrides.EMPTY_ONTOLOGY)
    cases = scoring.load_cases(_read(args.cases))
    targets = _load_targets(args.targets)
    weights = None
    if targets is not None:
        weights = audits.coverage_report(cases, targets).parity_weights
    reports = []
    ledger: tuple[overrides.OverrideRecord, ...] = ()
    for case in cases:
        report = scoring.score_case(registry, ontology, case)
        weight = scoring.case_weight_for(case.condition_tags, weights)
        if weight != report.case_weight:
            report = replace(report, case_weight=weight)
        reports.append(report)
        for outcome in report.outcomes:
            if outcome.override_ref is not None:
                request = next(r for r in case.override_requests
                               if r.clause_id == outcome.clause_id)
                ledger = overrides.append_override(
                    ledger, replace(request, prev_hash=None, hash=None))
    summary = scoring.aggregate_run(reports, weights)
    payload = {
        "registry_version": registry.version_label,
        "summary": scoring.run_summary_to_dict(summary),
        "reports": [scoring.score_report_to_dict(r) for r in reports],
    }
    mean = summary.weighted_mean
    print(f"scored {summary.n_cases} cases ({summary.n_scored} scoreable); "
          f"weighted mean normalized = "
          f"{'n/a' if mean is None else format(mean, '.4f')}")
    print(f"insufficiency flags: {summary.insufficiency_count}; "
          f"overrides applied: {len(ledger)}")
    if args.out:
        _write_json(args.out, payload, result)
    if args.ledger:
        overrides.write_ledger(args.ledger, ledger)
        result.artifacts.append(args.ledger)


def _cmd_migrate(args, result: CommandResult) -> None:
    old = reg.parse_registry(_read(args.registry))
    new, diff = lifecycle.migrate_registry(old, _read(args.revisions))
    print(diff.changelog_text)
    if args.out:
        _write_json(args.out, reg.registry_to_dict(new), result)
        changelog_path = str(Path(args.out).with_suffix(".changelog.md"))
        Path(changelog_path).write_text(diff.changelog_text, encoding="utf-8")
        result.artifacts.append(changelog_path)


def _cmd_recalc(args, result: CommandResult) -> None:
    registry = reg.parse_registry(_read(args.registry))
    ontology = (overrides.load_ontology(_read(args.ontology))
                if args.ontology else overrides.EMPTY_ONTOLOGY)
    archive = lifecycle.load_archive(_read(args.archive))
    records = lifecycle.recalculate_history(archive, registry, ontology)
    failed = [r for r in records if r.error]

    def fmt(v: float | None) -> str:
        return "n/a" if v is None else format(v, ".4f")

    for record in records:
        old_n = record.old_score.normalized
        new_n = record.new_score.normalized if record.new_score else None
        print(f"{record.case_id}: {fmt(old_n)} -> {fmt(new_n)}"
              + (f"  [{'; '.join(record.notes)}]" if record.notes else "")
              + (f"  ERROR: {record.error}" if record.error else ""))
    if args.out:
        _write_json(args.out, [lifecycle.recalculated_to_dict(r) for r in records], result)
    if failed:
        result.diagnostics.append(
            ("warning", f"{len(failed)} of {len(records)} cases failed to rescore", args.archive))


def _cmd_lint(args, result: CommandResult) -> None:
    cases = scoring.load_cases(_read(args.cases))
    registry = reg.parse_registry(_read(args.registry)) if args.registry else None
    report = lifecycle.lint_dataset(cases, registry)
    print(f"multi-turn share: {report.multi_turn_share:.2f} "
          f"({report.multi_turn_count}/{report.n_cases}) -> gate {report.multi_turn_gate}")
    print(f"missing jurisdiction: {report.missing_jurisdiction}; "
          f"missing benchmark_year: {report.missing_benchmark_year}")
    if report.volatile_untagged is not None:
        print(f"volatile clauses touched without 'volatile' tag: {report.volatile_untagged}")
    if args.out:
        _write_json(args.out, lifecycle.lint_report_to_dict(report), result)
    if not report.gate_passed:
        result.diagnostics.append(
            ("gate", f"multi-turn share {report.multi_turn_share:.2f} < 0.50", args.cases))
        result.exit_code = 1


def _cmd_coverage(args, result: CommandResult) -> None:
    cases = scoring.load_cases(_read(args.cases))
    report = audits.coverage_report(cases, _load_targets(args.targets))
    for row in report.rows:
        print(f"{row.condition:<20} count {row.count:>6}  share {row.share:8.4%}  "
              f"target {row.target:7.2%}  weight {row.parity_weight:.2f}")
    for warning in report.warnings:
        print(f"warning: {warning}")
        result.diagnostics.append(("warning", warning, args.cases))
    if args.out:
        _write_json(args.out, audits.coverage_report_to_dict(report), result)


def _cmd_equity(args, result: CommandResult) -> None:
    cases = scoring.load_cases(_read(args.cases))
    ledger = overrides.read_ledger(args.ledger) if args.ledger else ()
    group_field = args.group_field or "demographic_group"
    report = audits.equity_report(ledger, cases, group_field)
    for group in report.groups:
        print(f"{group.group:<16} overrides {group.override_count:>4} / {group.case_count:<5} "
              f"rate {group.rate:.3f}")
    flagged = [p for p in report.pairs if p.flagged]
    for pair in report.pairs:
        marker = "FLAGGED" if pair.flagged else (pair.note or "ok")
        ratio = "inf" if pair.rate_ratio == float("inf") else f"{pair.rate_ratio:.2f}"
        print(f"{pair.group_a} vs {pair.group_b}: ratio {ratio}, z {pair.z:+.3f} [{marker}]")
    print(f"note: {report.footnote}")
    if args.out:
        _write_json(args.out, audits.equity_report_to_dict(report), result)
    if flagged:
        result.diagnostics.append(
            ("gate", f"{len(flagged)} group pair(s) flagged for override-rate disparity",
             args.cases))
        result.exit_code = 1


def _cmd_trace(args, result: CommandResult) -> None:
    registry = reg.parse_registry(_read(args.registry))
    record = reg.trace_clause(registry, args.clause_id)
    print(f"clause:        {record.clause_id}")
    print(f"guideline:     {record.guideline_title} (rec {record.recommendation_path})")
    print(f"checklist:     {record.checklist_text}")
    print(f'quote:         "{record.trace_quote}"')
    print(f"registry:      {record.registry_version}")


def _cmd_audit_sample(args, result: CommandResult) -> None:
    reports = _load_reports_artifact(args.reports)
    sample = audits.sample_for_audit(reports, rate=args.rate, seed=args.seed)
    for warning in sample.warnings:
        print(f"warning: {warning}")
        result.diagnostics.append(("warning", warning, args.reports))
    print(f"sampled {len(sample.items)} outcomes at rate {args.rate} (seed {args.seed})")
    payload = {
        "rate": args.rate,
        "seed": args.seed,
        "items": [{"case_id": c, "clause_id": cl} for c, cl in sample.items],
        "warnings": list(sample.warnings),
    }
    if args.out:
        _write_json(args.out, payload, result)


def _cmd_audit_agreement(args, result: CommandResult) -> None:
    records = audits.read_adjudications(args.adjudications)
    stats = audits.agreement_stats(records)
    print(f"n = {stats.n}; raw agreement = {stats.raw_agreement:.4f}; "
          f"kappa = {stats.kappa:.4f}")
    (a, b), (c, d) = stats.table
    print(f"table: [[{a}, {b}], [{c}, {d}]]  (rows machine met/unmet, cols human)")
    if args.out:
        _write_json(args.out, {
            "n": stats.n,
            "raw_agreement": stats.raw_agreement,
            "kappa": stats.kappa,
            "table": [list(r) for r in stats.table],
        }, result)


def _cmd_serve(args, result: CommandResult) -> None:
    registry = reg.parse_registry(_read(args.registry))
    ontology = (overrides.load_ontology(_read(args.ontology))
                if args.ontology else overrides.EMPTY_ONTOLOGY)
    cases = scoring.load_cases(_read(args.cases)) if args.cases else []
    reports = _load_reports_artifact(args.reports) if args.reports else None
    ledger = overrides.read_ledger(args.ledger) if args.ledger else ()
    state = service.build_state(
        registry, ontology, cases,
        reports=reports,
        override_ledger=ledger,
        rate=args.rate,
        seed=args.seed,
        group_field=args.group_field or "demographic_group",
        targets=_load_targets(args.targets),
        out_dir=args.out,
    )
    server = service.GuidelineService(state, port=args.port, host=args.host)
    print(f"serving on {server.base_url} (queue: {len(state.queue)} items); Ctrl-C to stop")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        print("shutting down")
        server.shutdown()


_COMMANDS = {
    "validate": _cmd_validate,
    "score": _cmd_score,
    "migrate": _cmd_migrate,
    "recalc": _cmd_recalc,
    "lint": _cmd_lint,
    "coverage": _cmd_coverage,
    "equity": _cmd_equity,
    "trace": _cmd_trace,
    "serve": _cmd_serve,
}


def execute(argv: list[str]) -> CommandResult:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse prints usage itself; remap its exit code onto ours
        return CommandResult(exit_code=0 if exc.code == 0 else 2)
    result = CommandResult(exit_code=0)
    if args.command is None:
        parser.print_usage()
        return CommandResult(exit_code=2,
                             diagnostics=[("error", "no command given", "argv")])
    if args.command == "audit":
        if getattr(args, "audit_command", None) == "sample":
            body = _cmd_audit_sample
        elif getattr(args, "audit_command", None) == "agreement":
            body = _cmd_audit_agreement
        else:
            return CommandResult(exit_code=2,
                                 diagnostics=[("error", "audit needs sample|agreement", "argv")])
    else:
        body = _COMMANDS[args.command]
    try:
        body(args, result)
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        result.diagnostics.append(("error", str(exc), exc.details.get("location", "")))
        result.exit_code = 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        result.diagnostics.append(("error", str(exc), str(exc.filename)))
        result.exit_code = 2
    return result


def main() -> None:
    sys.exit(execute(sys.argv[1:]).exit_code)


if __name__ == "__main__":
    main()
