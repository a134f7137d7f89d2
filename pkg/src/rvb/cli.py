"""Command-line front door.

Subcommands: run, replay, metrics, report, export, validate-scenario.
Exit codes: 0 success; 2 bad input (config, scenario, archive file);
3 runtime failure (a run stopped on execution failure, a replay
diverged) — with the archive written so far left intact on disk.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Sequence

from .archive import ARCHIVE_FILENAME, RunArchive
from .content import GuardRuleSet, Prompt, TargetStub
from .cost import PriceTable, UsageLedger, estimate_cost, relative_reduction
from .errors import (
    AdapterError,
    ArchiveIOError,
    ArchiveOrderError,
    CodecError,
    ConfigError,
    MissingPriceError,
    PatchError,
    RvbError,
    ScenarioError,
    SchemaError,
    UndefinedMetricError,
    UsageError,
)
from .metrics import (
    CONTENT_COLUMNS,
    CYBER_COLUMNS,
    content_series,
    crde_from_records,
    cyber_series,
    ood_eval,
    render_crde,
    render_records,
    render_tabular,
)
from .orchestrator import (
    ConvergenceRule,
    Domain,
    Mode,
    load_run_config,
    replay,
    run,
)
from .scenarios import load_doc, load_prompt_corpus, validate_scenario_doc

_INPUT_ERRORS = (
    ConfigError,
    ScenarioError,
    SchemaError,
    ArchiveIOError,
    ArchiveOrderError,
    CodecError,
    UsageError,
    MissingPriceError,
)
_RUNTIME_ERRORS = (AdapterError, PatchError, UndefinedMetricError)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_RUNTIME = 3


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# --- run --------------------------------------------------------------------


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = load_run_config(args.config)
    overrides: dict[str, Any] = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.max_epoch is not None:
        overrides["max_epoch"] = args.max_epoch
    if args.count_delay is not None:
        overrides["count_delay"] = args.count_delay
    if args.aat_scope is not None:
        overrides["aat_scope"] = args.aat_scope
    if args.mode is not None:
        overrides["mode"] = Mode(args.mode)
    if args.convergence is not None:
        overrides["convergence"] = ConvergenceRule(args.convergence)
    if overrides:
        cfg = replace(cfg, **overrides)
    result = run(cfg, out_root=args.out)
    print(f"run: {cfg.run_id}")
    if result.run_dir is not None:
        print(f"archive: {result.run_dir / ARCHIVE_FILENAME}")
    stop = result.stop
    print(f"stop: {stop.kind.value} at epoch {stop.epoch} ({stop.detail})")
    if stop.kind.value == "ExecutionFailure":
        return EXIT_RUNTIME
    return EXIT_OK


# --- replay -----------------------------------------------------------------


def _cmd_replay(args: argparse.Namespace) -> int:
    report = replay(args.archive)
    label = "replay" if report.mode == "full" else "metrics-only replay"
    if report.ok:
        print(f"{label}: PASS")
        return EXIT_OK
    print(f"{label}: FAIL ({report.detail})")
    return EXIT_RUNTIME


# --- metrics ----------------------------------------------------------------


def _series_for(archive: RunArchive, aat_scope: str | None) -> tuple[list[dict], tuple[str, ...]]:
    domain = archive.header.get("domain")
    if domain == Domain.CYBER.value:
        return cyber_series(archive.epochs), CYBER_COLUMNS
    scenario = archive.header.get("config", {}).get("scenario", {})
    stub = TargetStub(resistance=frozenset(scenario.get("resistance", ())))
    if aat_scope is None:
        aat_scope = archive.header.get("config", {}).get("run", {}).get("aat_scope", "total")
    return content_series(archive.epochs, stub, aat_scope=aat_scope), CONTENT_COLUMNS


def _cmd_metrics(args: argparse.Namespace) -> int:
    archive = RunArchive.load(args.archive)
    rows, columns = _series_for(archive, args.aat_scope)
    if args.format == "jsonl":
        text = render_records(rows, columns)
    else:
        text = render_tabular(rows, columns)
    _emit(text, args.out)
    return EXIT_OK


# --- report -----------------------------------------------------------------


def _ledger_from_archive(archive: RunArchive) -> UsageLedger:
    run_cfg = archive.header.get("config", {}).get("run", {})
    models = {
        "red": run_cfg.get("red", {}).get("model", ""),
        "blue": run_cfg.get("blue", {}).get("model", ""),
    }
    ledger = UsageLedger()
    for rec in archive.epochs:
        for role in ("red", "blue"):
            usage = rec.token_usage.get(role, {})
            tin = int(usage.get("input_tokens", 0))
            tout = int(usage.get("output_tokens", 0))
            if tin == 0 and tout == 0:
                continue
            ledger.record(rec.epoch, role, models[role] or "local", tin, tout)
    return ledger


def _ledger_from_doc(ref: str) -> UsageLedger:
    doc = load_doc(ref)
    return UsageLedger.from_entries(doc.get("entries", ()))


def _cmd_report(args: argparse.Namespace) -> int:
    prices = PriceTable.from_doc(load_doc(args.prices))
    if args.usage:
        ledger = _ledger_from_doc(args.usage)
    elif args.archive:
        ledger = _ledger_from_archive(RunArchive.load(args.archive))
    else:
        print("error: report needs --usage or an archive", file=sys.stderr)
        return EXIT_INPUT
    tin, tout, total_tokens = ledger.total_tokens()
    print(f"tokens: input={tin} output={tout} total={total_tokens}")
    for model, (m_in, m_out) in sorted(ledger.by_model().items()):
        print(f"  {model}: input={m_in} output={m_out}")
    report = estimate_cost(ledger, prices)
    print(f"total cost: {report.display_total()}")
    if args.baseline:
        base = estimate_cost(_ledger_from_doc(args.baseline), prices)
        saving = relative_reduction(base.total, report.total)
        print(f"baseline cost: {base.display_total()}")
        print(f"reduction vs baseline: {saving * 100:.2f}%")
    return EXIT_OK


# --- export -----------------------------------------------------------------


def _write_file(out_dir: Path, name: str, text: str) -> None:
    path = out_dir / name
    path.write_text(text, encoding="utf-8")
    print(f"wrote {path}")


def _cmd_export(args: argparse.Namespace) -> int:
    archive = RunArchive.load(args.archive)
    domain = archive.header.get("domain")
    if domain == Domain.CYBER.value and args.ood_corpus:
        print("error: --ood-corpus applies to content archives only", file=sys.stderr)
        return EXIT_INPUT
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if domain == Domain.CYBER.value:
        rows = cyber_series(archive.epochs)
        trajectory = [
            {"epoch": r["epoch"], "dsr": r["tdsr"], "asc": r["asc"]} for r in rows
        ]
        _write_file(out_dir, "trajectory.csv", render_tabular(trajectory, ("epoch", "dsr", "asc")))
        _write_file(out_dir, "rates.csv", render_tabular(rows, ("epoch", "tdsr", "fdsr", "sdr")))
    else:
        scenario = archive.header.get("config", {}).get("scenario", {})
        stub = TargetStub(resistance=frozenset(scenario.get("resistance", ())))
        scope = archive.header.get("config", {}).get("run", {}).get("aat_scope", "total")
        rows = content_series(archive.epochs, stub, aat_scope=scope)
        _write_file(out_dir, "dsr_aat.csv", render_tabular(rows, ("epoch", "dsr", "aat")))
        _write_file(out_dir, "fpr.csv", render_tabular(rows, ("epoch", "fpr")))
        _write_file(out_dir, "crde.csv", render_crde(crde_from_records(archive.epochs, stub)))
        attempts = []
        for rec in archive.epochs:
            for ep in rec.episodes or ():
                attempts.append(
                    {
                        "task": ep["task_id"],
                        "epoch": rec.epoch,
                        "attempts": ep["attempts_used"],
                        "success": 1 if ep["success"] else 0,
                    }
                )
        _write_file(
            out_dir, "attempts.csv", render_tabular(attempts, ("task", "epoch", "attempts", "success"))
        )
        if args.ood_corpus:
            corpus = load_prompt_corpus(args.ood_corpus)
            guards = {
                f"v{rec.guard_version}": GuardRuleSet.from_dict(
                    {"rules": list(rec.guard_rules or ()), "version": rec.guard_version or 0}
                )
                for rec in archive.epochs
            }
            scores = ood_eval(guards, corpus, stub)
            name = Path(str(args.ood_corpus)).stem
            ood_rows = [
                {"corpus": name, "guard": label, "dsr": scores[label]}
                for label in guards
            ]
            _write_file(out_dir, "ood.csv", render_tabular(ood_rows, ("corpus", "guard", "dsr")))
    return EXIT_OK


# --- validate-scenario ------------------------------------------------------


def _cmd_validate(args: argparse.Namespace) -> int:
    doc = load_doc(args.scenario)
    problems = validate_scenario_doc(doc)
    if problems:
        for p in problems:
            print(f"problem: {p}")
        return EXIT_INPUT
    print(f"scenario OK: {doc.get('name', '?')} ({doc.get('domain', '?')})")
    return EXIT_OK


# --- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rvb",
        description="Red-vs-blue adversarial game runner (cyber and content domains).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="play a configured game and archive it")
    p_run.add_argument("--config", required=True, help="run config: a path or a bundled name")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--max-epoch", type=int, default=None)
    p_run.add_argument("--count-delay", type=int, default=None)
    p_run.add_argument("--aat-scope", choices=("total", "inner"), default=None)
    p_run.add_argument("--mode", choices=[m.value for m in Mode], default=None)
    p_run.add_argument(
        "--convergence", choices=[c.value for c in ConvergenceRule], default=None
    )
    p_run.add_argument("--out", default="runs", help="directory to hold run directories")
    p_run.set_defaults(func=_cmd_run)

    p_replay = sub.add_parser("replay", help="re-run an archive and compare bytes")
    p_replay.add_argument("archive")
    p_replay.set_defaults(func=_cmd_replay)

    p_metrics = sub.add_parser("metrics", help="per-epoch metric table from an archive")
    p_metrics.add_argument("archive")
    p_metrics.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    p_metrics.add_argument("--aat-scope", choices=("total", "inner"), default=None)
    p_metrics.add_argument("--out", default=None, help="write to a file instead of stdout")
    p_metrics.set_defaults(func=_cmd_metrics)

    p_report = sub.add_parser("report", help="token usage and cost")
    p_report.add_argument("archive", nargs="?", default=None)
    p_report.add_argument("--prices", required=True, help="price table document")
    p_report.add_argument("--usage", default=None, help="usage ledger document")
    p_report.add_argument("--baseline", default=None, help="usage ledger to compare against")
    p_report.set_defaults(func=_cmd_report)

    p_export = sub.add_parser("export", help="write per-chart CSV files")
    p_export.add_argument("archive")
    p_export.add_argument("--out", required=True)
    p_export.add_argument("--ood-corpus", default=None, help="JSONL prompt corpus")
    p_export.set_defaults(func=_cmd_export)

    p_val = sub.add_parser("validate-scenario", help="static checks on a scenario document")
    p_val.add_argument("scenario")
    p_val.set_defaults(func=_cmd_validate)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _INPUT_ERRORS as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except _RUNTIME_ERRORS as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    except RvbError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())
