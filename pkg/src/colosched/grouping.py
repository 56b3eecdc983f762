"""Clustering of job resource profiles into groups and online group assignment."""

from __future__ import annotations

import copy
import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Sequence

from .workload import Job, ResourceProfile

if TYPE_CHECKING:
    from .sim import ClusterSim

MAX_ITERATIONS = 100
CONVERGENCE_EPS = 1e-9


@dataclass
class GroupingModel:
    """k cluster centroids over the 5-dim profile space plus a label cache.

    The centroids are immutable after fitting; `labels` is a cache of past
    kind -> group assignments, mutated only by the scheduler loop
    (single-writer discipline).
    """

    k: int
    centroids: list[ResourceProfile]
    labels: dict[str, int] = field(default_factory=dict)
    objective_history: list[float] = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if len(self.centroids) != self.k:
            raise ValueError(f"expected {self.k} centroids, got {len(self.centroids)}")
        for kind, g in self.labels.items():
            if not 0 <= g < self.k:
                raise ValueError(f"cached label {kind!r} -> {g} outside [0, {self.k})")


def _sqdist(a: Sequence[float], b: Sequence[float]) -> float:
    return sum((x - y) ** 2 for x, y in zip(a, b))


def _nearest(point: Sequence[float], centroids: Sequence[Sequence[float]]) -> int:
    # lowest index wins ties, for determinism
    best, best_d = 0, _sqdist(point, centroids[0])
    for i in range(1, len(centroids)):
        d = _sqdist(point, centroids[i])
        if d < best_d:
            best, best_d = i, d
    return best


def fit_groups(
    profiles: Sequence[tuple[str, ResourceProfile]], k: int, seed: int
) -> GroupingModel:
    """Lloyd-style k-means over job profiles, deterministic for a fixed seed.

    Initialization protocol (reproducible by an external reimplementation):
    with rng = random.Random(seed), the first centroid is
    points[rng.randrange(n)]; each subsequent centroid is drawn with
    probability proportional to the squared distance to the nearest chosen
    centroid, via threshold = rng.random() * sum(d2) and the first index
    whose cumulative d2 exceeds the threshold. Refinement assigns each point
    to its nearest centroid (lowest index on ties), recomputes centroids as
    exact member means (math.fsum), keeps the previous centroid for an empty
    cluster, and stops after MAX_ITERATIONS or when no centroid moves by
    more than CONVERGENCE_EPS.
    """
    if not profiles:
        raise ValueError("no profiles to cluster")
    points = [p.as_tuple() for _, p in profiles]
    distinct = len(set(points))
    if k > distinct:
        raise ValueError(f"k={k} exceeds the {distinct} distinct profiles")
    rng = random.Random(seed)

    centroids: list[tuple[float, ...]] = [points[rng.randrange(len(points))]]
    while len(centroids) < k:
        d2 = [min(_sqdist(p, c) for c in centroids) for p in points]
        total = math.fsum(d2)
        threshold = rng.random() * total
        cumulative = 0.0
        chosen = len(points) - 1
        for i, d in enumerate(d2):
            cumulative += d
            if cumulative > threshold:
                chosen = i
                break
        centroids.append(points[chosen])

    objective_history: list[float] = []
    assignment = [0] * len(points)
    for _ in range(MAX_ITERATIONS):
        assignment = [_nearest(p, centroids) for p in points]
        objective_history.append(
            math.fsum(_sqdist(p, centroids[a]) for p, a in zip(points, assignment))
        )
        moved = 0.0
        new_centroids = []
        for i in range(k):
            members = [p for p, a in zip(points, assignment) if a == i]
            if members:
                dims = len(members[0])
                c = tuple(
                    math.fsum(m[d] for m in members) / len(members) for d in range(dims)
                )
            else:
                c = centroids[i]
            moved = max(moved, math.dist(c, centroids[i]))
            new_centroids.append(c)
        centroids = new_centroids
        if moved < CONVERGENCE_EPS:
            break

    labels = {
        kind: _nearest(profile.as_tuple(), centroids)
        for kind, profile in profiles
    }
    return GroupingModel(
        k=k,
        centroids=[ResourceProfile.from_iterable(c) for c in centroids],
        labels=labels,
        objective_history=objective_history,
    )


def assign_group(model: GroupingModel, job: Job, profile: ResourceProfile) -> int:
    """Group index of the centroid nearest to `profile` (lowest index on ties).

    Recurring kinds hit the label cache and skip the distance scan; fresh
    assignments are cached under job.kind.
    """
    cached = model.labels.get(job.kind)
    if cached is not None:
        return cached
    idx = _nearest(profile.as_tuple(), [c.as_tuple() for c in model.centroids])
    model.labels[job.kind] = idx
    return idx


def profile_sample_run(job: Job, sim: "ClusterSim", sample_fraction: float) -> ResourceProfile:
    """Measure a job's resource profile by running a scaled-down probe.

    The probe runs one container for sample_fraction of the job's duration on
    the node with the most free slots, inside a deep copy of the simulator,
    so the live timeline is never disturbed. The measured profile is the
    per-container demand scaled by the mean progress rate the probe achieved
    (its granted share under whatever contention it met), with the iowait
    field taken from the probe node's utilization over the run window.
    """
    if sim is None:
        raise ValueError("simulator unavailable")
    if not 0.0 < sample_fraction <= 1.0:
        raise ValueError(f"sample_fraction={sample_fraction} outside (0, 1]")

    probe_sim = copy.deepcopy(sim)
    node = max(probe_sim.nodes, key=lambda n: (n.slots_total - n.slots_used, -n.node_id))
    if node.slots_total - node.slots_used < 1:
        raise RuntimeError("no free slot available for a profiling run")
    probe = Job(
        id=f"__probe__{job.id}",
        kind=job.kind,
        demand=job.demand,
        base_duration=job.base_duration * sample_fraction,
        containers=1,
        group=job.group if job.group is not None else 0,
    )
    probe_sim.place_job(probe, nodes=[node.node_id])
    start = probe_sim.clock
    while probe.id not in probe_sim.completed:
        t, job_id = probe_sim.next_completion()
        probe_sim.advance_to(t)
        probe_sim.complete_job(job_id)
    end = probe_sim.completed[probe.id].completed_at
    mean_rate = probe.base_duration / (end - start)
    usage = probe_sim.node_utilization(node.node_id, (start, end))
    d = job.demand
    return ResourceProfile(
        cpu=min(1.0, d.cpu * mean_rate),
        mem=min(1.0, d.mem * mean_rate),
        disk=min(1.0, d.disk * mean_rate),
        net=min(1.0, d.net * mean_rate),
        iowait=usage.iowait,
    )


def save_grouping(model: GroupingModel, path) -> None:
    """Serialize a fitted model (k, centroid rows, label map) as JSON."""
    payload = {
        "k": model.k,
        "centroids": [list(c.as_tuple()) for c in model.centroids],
        "labels": dict(sorted(model.labels.items())),
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_grouping(path) -> GroupingModel:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return GroupingModel(
        k=int(payload["k"]),
        centroids=[ResourceProfile.from_iterable(c) for c in payload["centroids"]],
        labels={str(k): int(v) for k, v in payload["labels"].items()},
    )
