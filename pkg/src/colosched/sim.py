"""Deterministic discrete-event simulator of a container cluster.

Nodes expose capacity-normalized resources (cpu, mem, disk, net, each 1.0).
Resident containers add their demand; when a node's summed demand exceeds
capacity on some resource, every resident's progress rate is scaled by the
bottleneck ratio, and a job's rate is the minimum over the nodes hosting it.
Remaining work is integrated exactly piecewise between events, so a job's
integrated progress equals its base duration to machine precision.
"""

from __future__ import annotations

import math
import random
from bisect import insort
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .preferences import GoodnessSample, colocation_goodness
from .workload import Job, JobQueue, ResourceProfile

CAPACITY_RESOURCES = ("cpu", "mem", "disk", "net")

DEFAULT_NODE_COUNT = 32
DEFAULT_SLOTS_PER_NODE = 8
DEFAULT_CONTAINERS_PER_JOB = 32


class CapacityError(RuntimeError):
    """Not enough free container slots for a placement."""


@dataclass(frozen=True)
class Resident:
    group: int
    containers: int


@dataclass
class NodeState:
    node_id: int
    slots_total: int
    capacity: ResourceProfile = field(
        default_factory=lambda: ResourceProfile(1.0, 1.0, 1.0, 1.0, 1.0)
    )
    slots_used: int = 0
    residents: dict[str, Resident] = field(default_factory=dict)

    @property
    def slots_free(self) -> int:
        return self.slots_total - self.slots_used


@dataclass(frozen=True)
class ContentionSnapshot:
    node_id: int
    demand: dict[str, float]
    granted: dict[str, float]
    slowdown: float


@dataclass
class _RunningJob:
    job: Job
    placement: dict[int, int]
    remaining: float
    rate: float = 1.0
    dispatched_at: float = 0.0
    work: float = 0.0


@dataclass(frozen=True)
class CompletedJob:
    job_id: str
    dispatched_at: float
    completed_at: float
    work_integral: float
    base_duration: float


@dataclass(frozen=True)
class _Segment:
    start: float
    end: float
    granted: tuple[float, float, float, float]
    overload: float


class ClusterSim:
    """Single-threaded, deterministic cluster simulation instance."""

    def __init__(self, num_nodes: int, slots_per_node: int, beta: float = 1.0):
        if num_nodes < 1 or slots_per_node < 1:
            raise ValueError("cluster needs at least one node and one slot")
        self.nodes = [NodeState(i, slots_per_node) for i in range(num_nodes)]
        self.beta = beta
        self.clock = 0.0
        self.queue = JobQueue()
        self.running: dict[str, _RunningJob] = {}
        self.completed: dict[str, CompletedJob] = {}
        self.events: list[dict] = []
        self._pending_arrivals: list[tuple[float, int, Job]] = []
        self._arrival_seq = 0
        self._cursor = 0
        self._segments: dict[int, list[_Segment]] = {n.node_id: [] for n in self.nodes}
        self._open_segment: dict[int, tuple[float, tuple, float]] = {}
        self._window_start: dict[int, float] = {n.node_id: 0.0 for n in self.nodes}
        self._record_state()

    # ------------------------------------------------------------------
    # contention model

    def _node_demand(self, node: NodeState) -> tuple[float, float, float, float]:
        sums = [0.0, 0.0, 0.0, 0.0]
        for job_id, res in node.residents.items():
            d = self.running[job_id].job.demand
            for i, v in enumerate((d.cpu, d.mem, d.disk, d.net)):
                sums[i] += v * res.containers
        return tuple(sums)

    def _recompute_rates(self) -> dict[int, tuple]:
        demands = {n.node_id: self._node_demand(n) for n in self.nodes}
        node_rate = {}
        for n in self.nodes:
            cap = (n.capacity.cpu, n.capacity.mem, n.capacity.disk, n.capacity.net)
            slowdown = 1.0
            for d, c in zip(demands[n.node_id], cap):
                slowdown = max(slowdown, d / c)
            node_rate[n.node_id] = 1.0 / slowdown
        for rj in self.running.values():
            rj.rate = min(node_rate[nid] for nid in rj.placement)
        return demands

    def _record_state(self) -> None:
        """Close the per-node usage segments at the current clock and open
        fresh ones under the current placement."""
        for n in self.nodes:
            open_seg = self._open_segment.get(n.node_id)
            if open_seg is not None and self.clock > open_seg[0]:
                self._segments[n.node_id].append(
                    _Segment(open_seg[0], self.clock, open_seg[1], open_seg[2])
                )
        demands = self._recompute_rates()
        for n in self.nodes:
            granted = [0.0, 0.0, 0.0, 0.0]
            for job_id, res in n.residents.items():
                rj = self.running[job_id]
                d = rj.job.demand
                for i, v in enumerate((d.cpu, d.mem, d.disk, d.net)):
                    granted[i] += v * res.containers * rj.rate
            dem = demands[n.node_id]
            overload = max(0.0, dem[2] + dem[3] - 1.0)
            self._open_segment[n.node_id] = (self.clock, tuple(granted), overload)

    # ------------------------------------------------------------------
    # placement and lifecycle

    @property
    def free_slots(self) -> int:
        return sum(n.slots_free for n in self.nodes)

    def has_running(self) -> bool:
        return bool(self.running)

    def running_groups(self) -> list[int]:
        """Groups of the running jobs, one entry per job (a multiset)."""
        return [self.running[jid].job.group for jid in sorted(self.running)]

    def place_job(self, job: Job, nodes: Sequence[int] | None = None) -> dict[int, int]:
        """Place and start a job; containers spread round-robin across nodes
        with free slots (a rotating cursor), or over an explicit node list.
        """
        if job.group is None:
            raise ValueError(f"job {job.id} has no group assigned")
        if job.id in self.running or job.id in self.completed:
            raise ValueError(f"job {job.id} already placed")
        if nodes is None:
            if self.free_slots < job.containers:
                raise CapacityError(
                    f"job {job.id} needs {job.containers} containers, "
                    f"{self.free_slots} slots free"
                )
            placement = self._round_robin_placement(job.containers)
        else:
            placement = {}
            order = list(nodes)
            i = 0
            assigned = 0
            stuck = 0
            while assigned < job.containers:
                nid = order[i % len(order)]
                i += 1
                node = self.nodes[nid]
                if node.slots_used + placement.get(nid, 0) < node.slots_total:
                    placement[nid] = placement.get(nid, 0) + 1
                    assigned += 1
                    stuck = 0
                else:
                    stuck += 1
                    if stuck >= len(order):
                        raise CapacityError(
                            f"nodes {order} cannot host {job.containers} containers"
                        )
        for nid, count in placement.items():
            node = self.nodes[nid]
            node.slots_used += count
            node.residents[job.id] = Resident(job.group, count)
            self._window_start[nid] = self.clock
        self.running[job.id] = _RunningJob(
            job=job,
            placement=placement,
            remaining=job.base_duration,
            dispatched_at=self.clock,
        )
        self.events.append(
            {
                "time": self.clock,
                "event": "dispatch",
                "job": job.id,
                "nodes": sorted(placement),
            }
        )
        self._record_state()
        return placement

    def _round_robin_placement(self, containers: int) -> dict[int, int]:
        placement: dict[int, int] = {}
        n = len(self.nodes)
        idx = self._cursor
        assigned = 0
        visited_full = 0
        while assigned < containers:
            node = self.nodes[idx % n]
            idx += 1
            if node.slots_used + placement.get(node.node_id, 0) < node.slots_total:
                placement[node.node_id] = placement.get(node.node_id, 0) + 1
                assigned += 1
                visited_full = 0
            else:
                visited_full += 1
                if visited_full > n:
                    raise CapacityError("no free slots during placement")
        self._cursor = idx % n
        return placement

    def advance_to(self, t: float) -> None:
        if t < self.clock - 1e-9:
            raise ValueError(f"cannot advance backwards to {t} from {self.clock}")
        dt = t - self.clock
        if dt > 0:
            for rj in self.running.values():
                rj.work += rj.rate * dt
                rj.remaining -= rj.rate * dt
            self.clock = t

    def next_completion(self) -> tuple[float, str] | None:
        if not self.running:
            return None
        best = None
        for job_id in sorted(self.running):
            rj = self.running[job_id]
            t = self.clock + max(0.0, rj.remaining) / rj.rate
            if best is None or t < best[0]:
                best = (t, job_id)
        return best

    def complete_job(self, job_id: str) -> list[GoodnessSample]:
        """Remove a finished job and emit one goodness sample for every node
        that currently hosts containers (the finisher included, pre-removal),
        so the preference update covers all co-location pairs in the cluster.
        Each node's window runs from its last sample or combination change to
        now; zero-length windows yield no sample."""
        rj = self.running[job_id]
        samples: list[GoodnessSample] = []
        for node in self.nodes:
            if not node.residents:
                continue
            start = self._window_start[node.node_id]
            if self.clock > start:
                omega = tuple(sorted(res.group for res in node.residents.values()))
                usage = self.node_utilization(node.node_id, (start, self.clock))
                samples.append(
                    GoodnessSample(
                        node_id=node.node_id,
                        groups_on_node=omega,
                        goodness=colocation_goodness(usage, self.beta),
                        window=(start, self.clock),
                    )
                )
                self._window_start[node.node_id] = self.clock
        for nid, count in rj.placement.items():
            node = self.nodes[nid]
            node.slots_used -= count
            del node.residents[job_id]
            self._window_start[nid] = self.clock
        self.completed[job_id] = CompletedJob(
            job_id=job_id,
            dispatched_at=rj.dispatched_at,
            completed_at=self.clock,
            work_integral=rj.work,
            base_duration=rj.job.base_duration,
        )
        self.events.append(
            {
                "time": self.clock,
                "event": "complete",
                "job": job_id,
                "nodes": sorted(rj.placement),
            }
        )
        del self.running[job_id]
        self._record_state()
        return samples

    # ------------------------------------------------------------------
    # timed arrivals and the event step

    def schedule_arrival(self, time: float, job: Job) -> None:
        if time < self.clock:
            raise ValueError("arrival in the past")
        insort(self._pending_arrivals, (time, self._arrival_seq, job))
        self._arrival_seq += 1

    @property
    def event_queue(self) -> list[tuple[float, str, str]]:
        """Pending events as (time, type, job_id), soonest first."""
        pending = [(t, "arrival", job.id) for t, _, job in self._pending_arrivals]
        for job_id in sorted(self.running):
            rj = self.running[job_id]
            pending.append(
                (self.clock + max(0.0, rj.remaining) / rj.rate, "completion", job_id)
            )
        return sorted(pending)

    def step(self) -> dict:
        """Process the next pending event (arrival before completion on a
        tie), advancing the clock to its time."""
        arrival = self._pending_arrivals[0] if self._pending_arrivals else None
        completion = self.next_completion()
        if arrival is None and completion is None:
            raise RuntimeError("no pending events")
        if arrival is not None and (completion is None or arrival[0] <= completion[0]):
            time, _, job = self._pending_arrivals.pop(0)
            self.advance_to(time)
            job.submit_time = time
            self.queue.push(job)
            self.events.append(
                {"time": time, "event": "arrival", "job": job.id, "nodes": []}
            )
            return {"time": time, "event": "arrival", "job": job.id}
        time, job_id = completion
        self.advance_to(time)
        samples = self.complete_job(job_id)
        return {"time": time, "event": "complete", "job": job_id, "samples": samples}

    # ------------------------------------------------------------------
    # metrics

    def node_utilization(self, node_id: int, window: tuple[float, float]) -> ResourceProfile:
        """Time-averaged granted share per resource over a window; the iowait
        field maps the window's mean disk+net overload x to x/(1+x)."""
        start, end = window
        if not (0.0 <= start < end <= self.clock + 1e-9):
            raise ValueError(f"window {window} outside simulated history [0, {self.clock}]")
        span = end - start
        totals = [0.0, 0.0, 0.0, 0.0]
        overload_total = 0.0
        segments = list(self._segments[node_id])
        open_seg = self._open_segment.get(node_id)
        if open_seg is not None and self.clock > open_seg[0]:
            segments.append(_Segment(open_seg[0], self.clock, open_seg[1], open_seg[2]))
        for seg in segments:
            lo = max(start, seg.start)
            hi = min(end, seg.end)
            if hi <= lo:
                continue
            dt = hi - lo
            for i in range(4):
                totals[i] += seg.granted[i] * dt
            overload_total += seg.overload * dt
        mean_overload = overload_total / span
        values = [min(1.0, max(0.0, v / span)) for v in totals]
        iowait = mean_overload / (1.0 + mean_overload)
        return ResourceProfile(values[0], values[1], values[2], values[3], iowait)

    def contention_snapshot(self, node_id: int) -> ContentionSnapshot:
        node = self.nodes[node_id]
        demand = self._node_demand(node)
        granted = [0.0, 0.0, 0.0, 0.0]
        for job_id, res in node.residents.items():
            rj = self.running[job_id]
            d = rj.job.demand
            for i, v in enumerate((d.cpu, d.mem, d.disk, d.net)):
                granted[i] += v * res.containers * rj.rate
        cap = (node.capacity.cpu, node.capacity.mem, node.capacity.disk, node.capacity.net)
        slowdown = max(1.0, max(d / c for d, c in zip(demand, cap)))
        return ContentionSnapshot(
            node_id=node_id,
            demand=dict(zip(CAPACITY_RESOURCES, demand)),
            granted=dict(zip(CAPACITY_RESOURCES, granted)),
            slowdown=slowdown,
        )


# ----------------------------------------------------------------------
# workload materialization


@dataclass(frozen=True)
class JobKind:
    """A catalog entry: one recurring kind of job."""

    letter: str
    name: str
    demand: ResourceProfile
    base_duration: float
    containers: int = DEFAULT_CONTAINERS_PER_JOB


@dataclass(frozen=True)
class WorkloadSpec:
    """Declarative queue description over a job catalog.

    mode "pattern" repeats a letter pattern; "sequence" takes the letters
    verbatim; "online" takes the letters verbatim but releases them in
    arrival batches (car: one job per batch, aar: 1/2/3 jobs with
    probabilities 0.6/0.2/0.2).
    """

    catalog: Mapping[str, JobKind]
    mode: str
    pattern: str = ""
    repeat: int = 1
    sequence: str = ""
    arrival: str = "car"

    def __post_init__(self):
        if self.mode not in ("pattern", "sequence", "online"):
            raise ValueError(f"unknown workload mode {self.mode!r}")
        if self.mode == "online" and self.arrival not in ("car", "aar"):
            raise ValueError(f"unknown arrival mode {self.arrival!r}")


@dataclass
class Workload:
    jobs: list[Job]
    batches: list[list[Job]]
    mode: str
    arrival: str | None = None


def draw_arrival_count(rng: random.Random) -> int:
    """Number of jobs joining the queue after a scheduling round under the
    arbitrary arrival rate: 1, 2, or 3 with probabilities 0.6, 0.2, 0.2."""
    u = rng.random()
    if u < 0.6:
        return 1
    if u < 0.8:
        return 2
    return 3


def generate_workload(spec: WorkloadSpec, seed: int) -> Workload:
    """Materialize the queue described by a workload spec, deterministically
    for a fixed seed."""
    if spec.mode == "pattern":
        letters = spec.pattern.split() * spec.repeat
    else:
        letters = spec.sequence.split()
    if not letters:
        raise ValueError("workload is empty")
    jobs: list[Job] = []
    for i, letter in enumerate(letters):
        kind = spec.catalog.get(letter)
        if kind is None:
            raise ValueError(f"unknown job kind {letter!r} at position {i}")
        jobs.append(
            Job(
                id=f"{letter}{i:03d}",
                kind=kind.name,
                demand=kind.demand,
                base_duration=kind.base_duration,
                containers=kind.containers,
            )
        )
    if spec.mode != "online":
        return Workload(jobs=jobs, batches=[list(jobs)], mode=spec.mode)
    rng = random.Random(seed)
    batches: list[list[Job]] = []
    i = 0
    while i < len(jobs):
        count = 1 if spec.arrival == "car" else draw_arrival_count(rng)
        batches.append(jobs[i : i + count])
        i += count
    return Workload(jobs=jobs, batches=batches, mode=spec.mode, arrival=spec.arrival)


def default_catalog() -> dict[str, JobKind]:
    """Nine synthetic recurring job kinds spanning six resource-usage groups
    (three cpu-heavy, two mixed cpu+mem, one mem+net, one disk, one disk+net,
    one low-usage). Demand vectors are reconstructions shaped to make that
    six-way structure recoverable by clustering."""
    entries = [
        ("A", "kmeans", (0.52, 0.20, 0.02, 0.04, 0.0), 600.0),
        ("B", "pagerank", (0.14, 0.30, 0.06, 0.44, 0.0), 615.0),
        ("C", "components", (0.06, 0.10, 0.05, 0.07, 0.0), 570.0),
        ("D", "linreg", (0.50, 0.23, 0.03, 0.05, 0.0), 605.0),
        ("E", "logreg", (0.28, 0.50, 0.04, 0.05, 0.0), 590.0),
        ("F", "svm", (0.31, 0.47, 0.05, 0.04, 0.0), 600.0),
        ("G", "tpch", (0.10, 0.16, 0.55, 0.08, 0.0), 620.0),
        ("H", "sort", (0.08, 0.14, 0.36, 0.40, 0.0), 610.0),
        ("I", "wordcount", (0.48, 0.17, 0.06, 0.03, 0.0), 585.0),
    ]
    return {
        letter: JobKind(
            letter=letter,
            name=name,
            demand=ResourceProfile.from_iterable(demand),
            base_duration=duration,
            containers=4,
        )
        for letter, name, demand, duration in entries
    }
