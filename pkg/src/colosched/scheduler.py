"""Job-selection policies and the scheduling event loop.

Variants: "hugo" samples a queued group from the learned preference
distribution, then a job uniformly within the group; "hugo_star" adds
waiting-time weighting within groups and a hard waiting limit that overrides
the learned preferences; "round_robin" and "fifo" are non-learning baselines
dispatching in arrival order.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Sequence

from .preferences import GoodnessSample, PreferenceMatrix
from .sim import ClusterSim, Workload
from .workload import Job, JobQueue

VARIANTS = ("hugo", "hugo_star", "round_robin", "fifo")
LEARNING_VARIANTS = ("hugo", "hugo_star")

REASON_PREFERENCE = "preference_sampled"
REASON_OVERRIDE = "waiting_limit_override"
REASON_BASELINE = "baseline"


class InvariantViolation(RuntimeError):
    """A run produced logs that violate a scheduler invariant."""


@dataclass
class SchedulerPolicy:
    variant: str
    rng: random.Random
    waiting_limit: int | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown scheduler variant {self.variant!r}")
        if self.variant == "hugo_star":
            if self.waiting_limit is None or self.waiting_limit <= 0:
                raise ValueError("hugo_star requires a positive waiting_limit")
        elif self.waiting_limit is not None:
            raise ValueError(f"waiting_limit is only valid for hugo_star, not {self.variant}")

    @property
    def learns(self) -> bool:
        return self.variant in LEARNING_VARIANTS


@dataclass
class SchedulingDecision:
    job_id: str
    kind: str
    group: int
    reason: str
    distribution: dict[int, float] | None
    waiting_rounds: int
    over_limit_count: int = 0


def _weighted_pick(jobs: Sequence[Job], weights: Sequence[float], rng: random.Random) -> Job:
    total = sum(weights)
    if total <= 0:
        return jobs[rng.randrange(len(jobs))]
    threshold = rng.random() * total
    cumulative = 0.0
    for job, w in zip(jobs, weights):
        cumulative += w
        if cumulative > threshold:
            return job
    return jobs[-1]


def pick_within_group(
    policy: SchedulerPolicy, candidates: Sequence[Job], rng: random.Random | None = None
) -> Job:
    """Choose one job among same-group candidates: uniformly for hugo,
    waiting-time weighted (w_a / sum w) for hugo_star, falling back to
    uniform when every waiting time is zero."""
    if not candidates:
        raise ValueError("no candidates")
    if len(candidates) == 1:
        return candidates[0]
    rng = rng if rng is not None else policy.rng
    if policy.variant == "hugo_star":
        return _weighted_pick(candidates, [j.waiting_rounds for j in candidates], rng)
    return candidates[rng.randrange(len(candidates))]


def waiting_limit_override(
    policy: SchedulerPolicy, queue: Sequence[Job], rng: random.Random | None = None
) -> Job | None:
    """Job forced past the preference sampling because it hit the waiting
    limit; with several over the limit, one is drawn with probability
    proportional to waiting time. None when nothing is over the limit."""
    if policy.variant != "hugo_star":
        return None
    over = [j for j in queue if j.waiting_rounds >= policy.waiting_limit]
    if not over:
        return None
    if len(over) == 1:
        return over[0]
    rng = rng if rng is not None else policy.rng
    return _weighted_pick(over, [j.waiting_rounds for j in over], rng)


def select_next(
    policy: SchedulerPolicy,
    matrix: PreferenceMatrix,
    queue: JobQueue,
    cluster: ClusterSim,
) -> SchedulingDecision | None:
    """Pick the next job to dispatch, or None if nothing queued fits the
    free slots. The preference distribution is recomputed per call, since
    each dispatch changes the set of running groups."""
    fitting = [j for j in queue if j.containers <= cluster.free_slots]
    if not fitting:
        return None

    if policy.variant in ("fifo", "round_robin"):
        job = fitting[0]
        return SchedulingDecision(
            job_id=job.id,
            kind=job.kind,
            group=job.group,
            reason=REASON_BASELINE,
            distribution=None,
            waiting_rounds=job.waiting_rounds,
        )

    over_limit = (
        [j for j in fitting if j.waiting_rounds >= policy.waiting_limit]
        if policy.variant == "hugo_star"
        else []
    )
    forced = waiting_limit_override(policy, fitting)
    if forced is not None:
        return SchedulingDecision(
            job_id=forced.id,
            kind=forced.kind,
            group=forced.group,
            reason=REASON_OVERRIDE,
            distribution=None,
            waiting_rounds=forced.waiting_rounds,
            over_limit_count=len(over_limit),
        )

    distribution = matrix.selection_distribution(
        cluster.running_groups(), (j.group for j in fitting)
    )
    groups = sorted(distribution)
    threshold = policy.rng.random()
    cumulative = 0.0
    chosen_group = groups[-1]
    for g in groups:
        cumulative += distribution[g]
        if cumulative > threshold:
            chosen_group = g
            break
    candidates = [j for j in fitting if j.group == chosen_group]
    job = pick_within_group(policy, candidates)
    return SchedulingDecision(
        job_id=job.id,
        kind=job.kind,
        group=chosen_group,
        reason=REASON_PREFERENCE,
        distribution=distribution,
        waiting_rounds=job.waiting_rounds,
        over_limit_count=len(over_limit),
    )


def on_job_finished(
    policy: SchedulerPolicy,
    matrix: PreferenceMatrix,
    finished: Job,
    queue: JobQueue,
    goodness_samples: Sequence[GoodnessSample],
) -> None:
    """Completion bookkeeping: a completion ends a scheduling round, so every
    queued job's waiting count advances; learning variants fold the node
    goodness samples into the preference matrix, baselines leave it alone."""
    for job in queue:
        job.waiting_rounds += 1
    if policy.learns:
        matrix.update_preferences(goodness_samples)


@dataclass
class RunResult:
    makespan: float
    first_dispatch: float
    last_completion: float
    decisions: list[dict]
    events: list[dict]
    completed: dict
    utilization: dict[str, float]
    matrix: PreferenceMatrix
    rounds: int


class ScheduleRunner:
    """Drives one policy over one workload on one simulated cluster.

    A scheduling round is one dispatch opportunity: the initial wake plus
    one wake per job completion. Online arrival batches join the queue after
    every dispatch, and whenever the scheduler wakes to an empty queue with
    arrivals still pending, so the arrival process can never deadlock the
    run.
    """

    def __init__(
        self,
        sim: ClusterSim,
        policy: SchedulerPolicy,
        matrix: PreferenceMatrix,
        workload: Workload,
    ):
        self.sim = sim
        self.policy = policy
        self.matrix = matrix
        self.workload = workload
        self.queue = sim.queue
        self.queue.arrival = workload.arrival
        self.decisions: list[dict] = []
        self.rounds = 0
        self._seq = 0
        self._batches = list(workload.batches)
        self._next_batch = 0
        self._jobs_by_id = {job.id: job for job in workload.jobs}
        self._first_dispatch: float | None = None

    def _has_pending_arrivals(self) -> bool:
        return self._next_batch < len(self._batches)

    def _inject_batch(self) -> None:
        for job in self._batches[self._next_batch]:
            job.submit_time = self.sim.clock
            self.queue.push(job)
            self.sim.events.append(
                {"time": self.sim.clock, "event": "arrival", "job": job.id, "nodes": []}
            )
        self._next_batch += 1

    def _dispatch_until_blocked(self) -> None:
        online = self.workload.mode == "online"
        while True:
            if not self.queue and self._has_pending_arrivals() and not self.sim.has_running():
                self._inject_batch()
                continue
            decision = select_next(self.policy, self.matrix, self.queue, self.sim)
            if decision is None:
                return
            job = self._jobs_by_id[decision.job_id]
            self.queue.remove(job)
            self.sim.place_job(job)
            self.decisions.append(
                {
                    "seq": self._seq,
                    "round": self.rounds,
                    "time": self.sim.clock,
                    "policy": self.policy.variant,
                    "job": decision.job_id,
                    "kind": decision.kind,
                    "group": decision.group,
                    "reason": decision.reason,
                    "waiting": decision.waiting_rounds,
                    "over_limit_count": decision.over_limit_count,
                    "distribution": (
                        None
                        if decision.distribution is None
                        else {str(g): p for g, p in sorted(decision.distribution.items())}
                    ),
                }
            )
            self._seq += 1
            if self._first_dispatch is None:
                self._first_dispatch = self.sim.clock
            if online and self._has_pending_arrivals():
                self._inject_batch()

    def run(self) -> RunResult:
        if self.workload.mode != "online":
            self._inject_batch()
        self._dispatch_until_blocked()
        while self.sim.has_running():
            t, job_id = self.sim.next_completion()
            self.sim.advance_to(t)
            samples = self.sim.complete_job(job_id)
            self.rounds += 1
            on_job_finished(
                self.policy, self.matrix, self._jobs_by_id[job_id], self.queue, samples
            )
            self._dispatch_until_blocked()
        if self.queue or self._has_pending_arrivals():
            raise InvariantViolation(
                "run drained with jobs still queued; a job cannot fit the cluster"
            )
        first = self._first_dispatch if self._first_dispatch is not None else 0.0
        last = max((c.completed_at for c in self.sim.completed.values()), default=first)
        utilization = self._mean_utilization(first, last)
        return RunResult(
            makespan=last - first,
            first_dispatch=first,
            last_completion=last,
            decisions=self.decisions,
            events=self.sim.events,
            completed=self.sim.completed,
            utilization=utilization,
            matrix=self.matrix,
            rounds=self.rounds,
        )

    def _mean_utilization(self, start: float, end: float) -> dict[str, float]:
        if end <= start:
            return {"cpu": 0.0, "mem": 0.0, "disk": 0.0, "net": 0.0, "iowait": 0.0}
        sums = {"cpu": 0.0, "mem": 0.0, "disk": 0.0, "net": 0.0, "iowait": 0.0}
        for node in self.sim.nodes:
            usage = self.sim.node_utilization(node.node_id, (start, end))
            for name in sums:
                sums[name] += getattr(usage, name)
        return {name: value / len(self.sim.nodes) for name, value in sums.items()}
