"""Declarative experiment driver: runs scheduler variants over identical
workloads, validates the decision logs, and writes reports, logs, and
histograms as data files."""

from __future__ import annotations

import json
import random
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .grouping import (
    GroupingModel,
    assign_group,
    fit_groups,
    load_grouping,
    profile_sample_run,
    save_grouping,
)
from .preferences import PreferenceMatrix
from .scheduler import (
    REASON_OVERRIDE,
    REASON_PREFERENCE,
    VARIANTS,
    InvariantViolation,
    RunResult,
    ScheduleRunner,
    SchedulerPolicy,
)
from .sim import ClusterSim, JobKind, WorkloadSpec, generate_workload
from .workload import ResourceProfile

UTILIZATION_COLUMNS = ("cpu", "mem", "disk", "net")


class ConfigError(ValueError):
    """Experiment configuration is invalid."""


@dataclass
class ExperimentConfig:
    name: str
    nodes: int
    slots_per_node: int
    catalog: dict[str, JobKind]
    workload: WorkloadSpec
    schedulers: list[str]
    seeds: list[int]
    k: int = 6
    alpha: float = 0.1
    beta: float = 1.0
    waiting_limit: int | None = None
    softmax_axis: str = "paper"
    update_mode: str = "increment"
    group_seed: int = 0
    profile_sample_fraction: float = 0.1
    grouping_in: str | None = None
    grouping_out: str | None = None
    matrix_in: str | None = None
    matrix_out: str | None = None
    out_dir: str = "results"

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        try:
            raw = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        problems: list[str] = []

        def need(key, kind, predicate=None, why=""):
            if key not in raw:
                problems.append(f"missing field {key!r}")
                return None
            value = raw[key]
            if not isinstance(value, kind):
                problems.append(f"{key} must be {kind}, got {type(value).__name__}")
                return None
            if predicate is not None and not predicate(value):
                problems.append(f"{key} {why}")
                return None
            return value

        name = need("name", str)
        cluster = need("cluster", dict) or {}
        nodes = cluster.get("nodes")
        slots = cluster.get("slots_per_node")
        if not isinstance(nodes, int) or nodes < 1:
            problems.append("cluster.nodes must be a positive integer")
        if not isinstance(slots, int) or slots < 1:
            problems.append("cluster.slots_per_node must be a positive integer")

        catalog_raw = need("catalog", dict) or {}
        catalog: dict[str, JobKind] = {}
        for letter, entry in catalog_raw.items():
            try:
                demand = ResourceProfile.from_iterable(entry["demand"])
                kind = JobKind(
                    letter=letter,
                    name=str(entry.get("kind", letter)),
                    demand=demand,
                    base_duration=float(entry["base_duration"]),
                    containers=int(entry.get("containers", 1)),
                )
            except (KeyError, TypeError, ValueError) as exc:
                problems.append(f"catalog entry {letter!r}: {exc}")
                continue
            if kind.base_duration <= 0:
                problems.append(f"catalog entry {letter!r}: base_duration must be > 0")
            if isinstance(nodes, int) and isinstance(slots, int) and kind.containers > nodes * slots:
                problems.append(
                    f"catalog entry {letter!r}: {kind.containers} containers exceed "
                    f"cluster capacity {nodes * slots}"
                )
            catalog[letter] = kind

        wl_raw = need("workload", dict) or {}
        workload = None
        try:
            workload = WorkloadSpec(
                catalog=catalog,
                mode=str(wl_raw.get("mode", "")),
                pattern=str(wl_raw.get("pattern", "")),
                repeat=int(wl_raw.get("repeat", 1)),
                sequence=str(wl_raw.get("sequence", "")),
                arrival=str(wl_raw.get("arrival", "car")),
            )
            letters = (
                workload.pattern.split()
                if workload.mode == "pattern"
                else workload.sequence.split()
            )
            if not letters:
                problems.append("workload names no jobs")
            for letter in letters:
                if letter not in catalog:
                    problems.append(f"workload uses unknown catalog letter {letter!r}")
                    break
        except ValueError as exc:
            problems.append(str(exc))

        schedulers = need("schedulers", list) or []
        for s in schedulers:
            if s not in VARIANTS:
                problems.append(f"unknown scheduler {s!r} (valid: {', '.join(VARIANTS)})")
        seeds = need("seeds", list) or []
        if not seeds or not all(isinstance(s, int) for s in seeds):
            problems.append("seeds must be a non-empty list of integers")

        k = raw.get("k", 6)
        if not isinstance(k, int) or k < 1:
            problems.append("k must be a positive integer")
        elif catalog:
            distinct = len({kind.demand.as_tuple() for kind in catalog.values()})
            if raw.get("grouping_in") is None and k > distinct:
                problems.append(f"k={k} exceeds the {distinct} distinct catalog profiles")

        alpha = raw.get("alpha", 0.1)
        if not isinstance(alpha, (int, float)) or alpha <= 0:
            problems.append("alpha must be > 0")
        beta = raw.get("beta", 1.0)
        if not isinstance(beta, (int, float)) or beta < 0:
            problems.append("beta must be >= 0")
        waiting_limit = raw.get("waiting_limit")
        if "hugo_star" in schedulers and (
            not isinstance(waiting_limit, int) or waiting_limit <= 0
        ):
            problems.append("hugo_star requires a positive integer waiting_limit")
        softmax_axis = raw.get("softmax_axis", "paper")
        if softmax_axis not in ("paper", "row"):
            problems.append("softmax_axis must be 'paper' or 'row'")
        update_mode = raw.get("update_mode", "increment")
        if update_mode not in ("increment", "assign"):
            problems.append("update_mode must be 'increment' or 'assign'")
        sample_fraction = raw.get("profile_sample_fraction", 0.1)
        if not isinstance(sample_fraction, (int, float)) or not 0 < sample_fraction <= 1:
            problems.append("profile_sample_fraction must be in (0, 1]")

        if problems:
            raise ConfigError("; ".join(problems))

        return cls(
            name=name,
            nodes=nodes,
            slots_per_node=slots,
            catalog=catalog,
            workload=workload,
            schedulers=list(schedulers),
            seeds=list(seeds),
            k=k,
            alpha=float(alpha),
            beta=float(beta),
            waiting_limit=waiting_limit,
            softmax_axis=softmax_axis,
            update_mode=update_mode,
            group_seed=int(raw.get("group_seed", 0)),
            profile_sample_fraction=float(sample_fraction),
            grouping_in=raw.get("grouping_in"),
            grouping_out=raw.get("grouping_out"),
            matrix_in=raw.get("matrix_in"),
            matrix_out=raw.get("matrix_out"),
            out_dir=str(raw.get("out_dir", "results")),
        )

    def validate_paths(self) -> None:
        for label, path in (("matrix_in", self.matrix_in), ("grouping_in", self.grouping_in)):
            if path is not None and not Path(path).exists():
                raise ConfigError(f"{label} path does not exist: {path}")


def _resolve_grouping(config: ExperimentConfig) -> GroupingModel:
    if config.grouping_in is not None:
        model = load_grouping(config.grouping_in)
        if model.k != config.k:
            raise ConfigError(
                f"grouping model k={model.k} does not match config k={config.k}"
            )
        return model
    profiles = [
        (kind.name, kind.demand) for _, kind in sorted(config.catalog.items())
    ]
    return fit_groups(profiles, config.k, config.group_seed)


def _assign_workload_groups(config, model: GroupingModel, workload, sim: ClusterSim) -> None:
    """Label every job with its group: recurring kinds from the cache, new
    kinds via a profiling run on the (still idle) simulated cluster."""
    for job in workload.jobs:
        if job.kind not in model.labels:
            measured = profile_sample_run(job, sim, config.profile_sample_fraction)
            assign_group(model, job, measured)
        job.group = model.labels[job.kind]


def _load_matrix(config: ExperimentConfig) -> PreferenceMatrix:
    if config.matrix_in is not None:
        matrix = PreferenceMatrix.load(
            config.matrix_in,
            softmax_axis=config.softmax_axis,
            update_mode=config.update_mode,
        )
        if matrix.k != config.k:
            raise ConfigError(
                f"matrix dimension mismatch: file has k={matrix.k}, config k={config.k}"
            )
        matrix.alpha = config.alpha
        return matrix
    return PreferenceMatrix(
        config.k,
        alpha=config.alpha,
        softmax_axis=config.softmax_axis,
        update_mode=config.update_mode,
    )


def run_single(
    config: ExperimentConfig,
    variant: str,
    seed: int,
    model: GroupingModel,
    matrix: PreferenceMatrix,
) -> RunResult:
    sim = ClusterSim(config.nodes, config.slots_per_node, beta=config.beta)
    workload = generate_workload(config.workload, seed)
    _assign_workload_groups(config, model, workload, sim)
    policy = SchedulerPolicy(
        variant=variant,
        rng=random.Random(seed),
        waiting_limit=config.waiting_limit if variant == "hugo_star" else None,
    )
    runner = ScheduleRunner(sim, policy, matrix, workload)
    return runner.run()


def waiting_histogram(waits: Iterable[int]) -> list[tuple[int, int]]:
    """Rows (waiting_rounds, count) covering 0..max observed."""
    values = list(waits)
    if not values:
        raise ValueError("no dispatch records to build a histogram from")
    top = max(values)
    counts = [0] * (top + 1)
    for w in values:
        counts[w] += 1
    return list(enumerate(counts))


def emit_waiting_histogram(decisions: Sequence[dict]) -> list[tuple[int, int]]:
    """Histogram of waiting rounds at dispatch, from a decision log."""
    return waiting_histogram(d["waiting"] for d in decisions)


def validate_decision_log(decisions: Sequence[dict], policy_variant: str, waiting_limit) -> None:
    """Post-run checks of the per-decision invariants; raises
    InvariantViolation on the first breach."""
    for d in decisions:
        if d["reason"] == REASON_PREFERENCE:
            dist = d["distribution"]
            if dist is None:
                raise InvariantViolation(f"decision {d['seq']}: missing distribution")
            total = sum(dist.values())
            if abs(total - 1.0) > 1e-9:
                raise InvariantViolation(
                    f"decision {d['seq']}: distribution sums to {total}"
                )
            if dist.get(str(d["group"]), 0.0) <= 0.0:
                raise InvariantViolation(
                    f"decision {d['seq']}: chosen group {d['group']} has zero probability"
                )
    if policy_variant == "hugo_star":
        q_max = max((d["over_limit_count"] for d in decisions), default=0)
        bound = waiting_limit + q_max
        for d in decisions:
            if d["waiting"] > bound:
                raise InvariantViolation(
                    f"decision {d['seq']}: job {d['job']} dispatched at waiting "
                    f"{d['waiting']} > limit {waiting_limit} + Q_max {q_max}"
                )


def _write_jsonl(path: Path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def _write_histogram_csv(path: Path, rows: Sequence[tuple[int, int]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("waiting_rounds,count\n")
        for wait, count in rows:
            fh.write(f"{wait},{count}\n")


def run_experiment(config: ExperimentConfig) -> dict:
    """Execute every configured scheduler variant on identical workloads and
    seeds; write the report, decision/event logs, utilization table, and
    waiting histograms under config.out_dir; return the report dict."""
    config.validate_paths()
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    model = _resolve_grouping(config)
    runs: list[dict] = []
    results: dict[tuple[str, int], RunResult] = {}
    saved_matrix = False
    for variant in config.schedulers:
        for seed in config.seeds:
            matrix = _load_matrix(config)
            result = run_single(config, variant, seed, model, matrix)
            validate_decision_log(result.decisions, variant, config.waiting_limit)
            histogram = emit_waiting_histogram(result.decisions)
            if sum(c for _, c in histogram) != len(result.decisions):
                raise InvariantViolation("histogram counts do not sum to dispatch count")
            results[(variant, seed)] = result
            runs.append(
                {
                    "scheduler": variant,
                    "seed": seed,
                    "makespan_s": result.makespan,
                    "rounds": result.rounds,
                    "jobs": len(result.completed),
                    "mean_utilization_pct": {
                        name: result.utilization[name] * 100.0
                        for name in UTILIZATION_COLUMNS
                    },
                    "mean_iowait_pct": result.utilization["iowait"] * 100.0,
                }
            )
            stem = f"{variant}-seed{seed}"
            _write_jsonl(out_dir / f"{stem}-decisions.jsonl", result.decisions)
            _write_jsonl(out_dir / f"{stem}-events.jsonl", result.events)
            _write_histogram_csv(out_dir / f"{stem}-waiting.csv", histogram)
            if (
                not saved_matrix
                and config.matrix_out is not None
                and variant in ("hugo", "hugo_star")
            ):
                result.matrix.save(config.matrix_out)
                saved_matrix = True

    if config.matrix_out is not None and not saved_matrix:
        # no learning variant ran; persist the (untouched) input matrix
        _load_matrix(config).save(config.matrix_out)
    if config.grouping_out is not None:
        save_grouping(model, config.grouping_out)

    baseline = next(
        (v for v in ("round_robin", "fifo") if v in config.schedulers),
        config.schedulers[0],
    )
    baseline_makespan = {
        seed: results[(baseline, seed)].makespan for seed in config.seeds
    }
    for run in runs:
        base = baseline_makespan[run["seed"]]
        run["delta_vs_baseline_pct"] = (
            (run["makespan_s"] - base) / base * 100.0 if base > 0 else 0.0
        )

    summary = {}
    for variant in config.schedulers:
        makespans = [results[(variant, seed)].makespan for seed in config.seeds]
        deltas = [
            r["delta_vs_baseline_pct"] for r in runs if r["scheduler"] == variant
        ]
        summary[variant] = {
            "median_makespan_s": statistics.median(makespans),
            "min_makespan_s": min(makespans),
            "max_makespan_s": max(makespans),
            "median_delta_pct": statistics.median(deltas),
        }

    report = {
        "name": config.name,
        "baseline": baseline,
        "time_unit": "simulated seconds",
        "schedulers": config.schedulers,
        "seeds": config.seeds,
        "runs": runs,
        "summary": summary,
    }
    (out_dir / "report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    with open(out_dir / "utilization.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("scheduler,seed,cpu_pct,mem_pct,disk_pct,net_pct,makespan_s,delta_pct\n")
        for run in runs:
            util = run["mean_utilization_pct"]
            fh.write(
                f"{run['scheduler']},{run['seed']},"
                f"{util['cpu']:.4f},{util['mem']:.4f},{util['disk']:.4f},{util['net']:.4f},"
                f"{run['makespan_s']:.6f},{run['delta_vs_baseline_pct']:.4f}\n"
            )
    return report


def chain_experiments(configs: Sequence[ExperimentConfig]) -> list[dict]:
    """Run configs in order, threading the serialized preference matrix (and
    grouping model, when configured) from each run into the next."""
    reports = []
    for i, config in enumerate(configs):
        if i > 0:
            prev = configs[i - 1]
            if prev.matrix_out is None or config.matrix_in != prev.matrix_out:
                raise ConfigError(
                    f"chain link {i}: matrix_in {config.matrix_in!r} does not match "
                    f"predecessor matrix_out {prev.matrix_out!r}"
                )
            if config.grouping_in is not None and prev.grouping_out is not None:
                if config.grouping_in != prev.grouping_out:
                    raise ConfigError(
                        f"chain link {i}: grouping_in {config.grouping_in!r} does not "
                        f"match predecessor grouping_out {prev.grouping_out!r}"
                    )
        reports.append(run_experiment(config))
    return reports
