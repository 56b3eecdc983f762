"""Command-line driver: fit groupings, run experiments, chain them, and
re-emit reports from decision logs.

Exit codes: 0 success, 1 configuration error, 2 invariant violation.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .experiment import (
    ConfigError,
    ExperimentConfig,
    chain_experiments,
    emit_waiting_histogram,
    run_experiment,
    validate_decision_log,
)
from .grouping import fit_groups, save_grouping
from .scheduler import InvariantViolation
from .workload import load_traces, summarize_job

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INVARIANT = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="colosched",
        description="Co-location-aware cluster scheduling experiments on a "
        "deterministic simulator.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_group = sub.add_parser("group", help="fit a grouping model from trace data")
    p_group.add_argument("--traces", required=True, help="trace CSV file")
    p_group.add_argument("--k", type=int, required=True, help="number of groups")
    p_group.add_argument("--seed", type=int, default=0)
    p_group.add_argument("--out", required=True, help="output model file (JSON)")

    p_run = sub.add_parser("run", help="run one experiment config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int, action="append", help="override config seeds")
    p_run.add_argument("--scheduler", action="append", help="override config schedulers")
    p_run.add_argument("--out", help="override output directory")
    p_run.add_argument("--matrix-in", help="override input preference matrix path")
    p_run.add_argument("--matrix-out", help="override output preference matrix path")
    p_run.add_argument("--softmax-axis", choices=("paper", "row"))
    p_run.add_argument("--update-mode", choices=("increment", "assign"))
    p_run.add_argument(
        "--validate", action="store_true", help="check the config and exit"
    )

    p_chain = sub.add_parser("chain", help="run configs sequentially, threading the matrix")
    p_chain.add_argument("--configs", nargs="+", required=True)

    p_report = sub.add_parser("report", help="emit histogram/table from a decision log")
    p_report.add_argument("--log", required=True, help="decision log (JSON-lines)")
    p_report.add_argument("--histogram", help="write waiting-time histogram CSV here")
    p_report.add_argument("--table", help="write per-decision CSV table here")
    p_report.add_argument(
        "--check-limit",
        type=int,
        help="assert the hugo_star starvation bound for this waiting limit",
    )
    return parser


def _cmd_group(args) -> int:
    records = load_traces(args.traces)
    job_ids = sorted({r.job_id for r in records})
    profiles = [(job_id, summarize_job(records, job_id)) for job_id in job_ids]
    model = fit_groups(profiles, args.k, args.seed)
    save_grouping(model, args.out)
    print(f"fitted {args.k} groups over {len(profiles)} job profiles -> {args.out}")
    return EXIT_OK


def _cmd_run(args) -> int:
    config = ExperimentConfig.from_file(args.config)
    if args.seed:
        config.seeds = list(args.seed)
    if args.scheduler:
        for s in args.scheduler:
            if s not in ("hugo", "hugo_star", "round_robin", "fifo"):
                raise ConfigError(f"unknown scheduler {s!r}")
        config.schedulers = list(args.scheduler)
    if args.out:
        config.out_dir = args.out
    if args.matrix_in:
        config.matrix_in = args.matrix_in
    if args.matrix_out:
        config.matrix_out = args.matrix_out
    if args.softmax_axis:
        config.softmax_axis = args.softmax_axis
    if args.update_mode:
        config.update_mode = args.update_mode
    if args.validate:
        config.validate_paths()
        print(f"config ok: {config.name}")
        return EXIT_OK
    report = run_experiment(config)
    for run in report["runs"]:
        print(
            f"{run['scheduler']:<12} seed {run['seed']:<6} "
            f"makespan {run['makespan_s']:.1f}s "
            f"delta {run['delta_vs_baseline_pct']:+.2f}%"
        )
    print(f"report -> {Path(config.out_dir) / 'report.json'}")
    return EXIT_OK


def _cmd_chain(args) -> int:
    configs = [ExperimentConfig.from_file(p) for p in args.configs]
    reports = chain_experiments(configs)
    for report in reports:
        for variant, stats in sorted(report["summary"].items()):
            print(
                f"{report['name']}: {variant} median makespan "
                f"{stats['median_makespan_s']:.1f}s "
                f"(delta {stats['median_delta_pct']:+.2f}%)"
            )
    return EXIT_OK


def _cmd_report(args) -> int:
    log_path = Path(args.log)
    if not log_path.exists():
        raise ConfigError(f"log file not found: {log_path}")
    decisions = [
        json.loads(line)
        for line in log_path.read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    if not decisions:
        raise ConfigError(f"log file {log_path} contains no decisions")
    if args.check_limit is not None:
        variant = decisions[0].get("policy", "hugo_star")
        validate_decision_log(decisions, variant, args.check_limit)
        print(f"starvation bound ok for waiting limit {args.check_limit}")
    if args.histogram:
        rows = emit_waiting_histogram(decisions)
        with open(args.histogram, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("waiting_rounds,count\n")
            for wait, count in rows:
                fh.write(f"{wait},{count}\n")
        print(f"histogram -> {args.histogram}")
    if args.table:
        with open(args.table, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("seq,round,time,job,group,reason,waiting\n")
            for d in decisions:
                fh.write(
                    f"{d['seq']},{d['round']},{d['time']},{d['job']},"
                    f"{d['group']},{d['reason']},{d['waiting']}\n"
                )
        print(f"table -> {args.table}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; that slot is reserved for
        # invariant violations here
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    try:
        if args.command == "group":
            return _cmd_group(args)
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "chain":
            return _cmd_chain(args)
        if args.command == "report":
            return _cmd_report(args)
        raise ConfigError(f"unknown command {args.command!r}")
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
