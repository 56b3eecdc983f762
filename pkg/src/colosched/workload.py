"""Core domain types: jobs, resource profiles, monitoring traces, queues."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

RESOURCE_FIELDS = ("cpu", "mem", "disk", "net", "iowait")
TRACE_HEADER = ("job_id", "node_id", "timestamp", "cpu", "mem", "disk", "net", "iowait")


class TraceFormatError(ValueError):
    """Trace file does not conform to the CSV schema."""

    def __init__(self, message: str, line: int | None = None, column: str | None = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class ResourceProfile:
    """Per-resource utilization vector, each entry a fraction of node capacity."""

    cpu: float
    mem: float
    disk: float
    net: float
    iowait: float = 0.0

    def __post_init__(self):
        for name in RESOURCE_FIELDS:
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or math.isnan(value):
                raise ValueError(f"{name} must be a number, got {value!r}")
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value} outside [0, 1]")

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.cpu, self.mem, self.disk, self.net, self.iowait)

    @classmethod
    def from_iterable(cls, values: Iterable[float]) -> "ResourceProfile":
        vals = [float(v) for v in values]
        if len(vals) != len(RESOURCE_FIELDS):
            raise ValueError(f"expected {len(RESOURCE_FIELDS)} values, got {len(vals)}")
        return cls(*vals)

    def distance_to(self, other: "ResourceProfile") -> float:
        return math.dist(self.as_tuple(), other.as_tuple())


@dataclass
class Job:
    """A schedulable job. `demand` is the mean per-container resource demand.

    `group` and `waiting_rounds` are assigned/advanced by the scheduler loop
    (single writer); everything else is fixed at construction.
    """

    id: str
    kind: str
    demand: ResourceProfile
    base_duration: float
    containers: int = 1
    group: int | None = None
    submit_time: float = 0.0
    waiting_rounds: int = 0

    def __post_init__(self):
        if self.containers < 1:
            raise ValueError(f"job {self.id}: containers must be >= 1")
        if self.base_duration <= 0:
            raise ValueError(f"job {self.id}: base_duration must be > 0")
        if self.waiting_rounds < 0:
            raise ValueError(f"job {self.id}: waiting_rounds must be >= 0")


@dataclass(frozen=True)
class TraceRecord:
    """One monitoring sample for one job on one node."""

    job_id: str
    node_id: str
    timestamp: float
    usage: ResourceProfile


class JobQueue:
    """Ordered queue of distinct jobs. FIFO order is preserved; policies may
    dispatch out of order but never reorder the backing list."""

    def __init__(self, jobs: Iterable[Job] = (), arrival=None):
        self._jobs: list[Job] = []
        self._ids: set[str] = set()
        self.arrival = arrival
        for job in jobs:
            self.push(job)

    def push(self, job: Job) -> None:
        if job.id in self._ids:
            raise ValueError(f"duplicate job id {job.id!r} in queue")
        self._ids.add(job.id)
        self._jobs.append(job)

    def remove(self, job: Job) -> None:
        self._jobs.remove(job)
        self._ids.discard(job.id)

    @property
    def jobs(self) -> tuple[Job, ...]:
        return tuple(self._jobs)

    def __iter__(self) -> Iterator[Job]:
        return iter(self._jobs)

    def __len__(self) -> int:
        return len(self._jobs)

    def __bool__(self) -> bool:
        return bool(self._jobs)


def load_traces(path) -> list[TraceRecord]:
    """Parse a trace CSV file (schema: job_id,node_id,timestamp,cpu,mem,disk,net,iowait).

    Raises FileNotFoundError for a missing file and TraceFormatError (with the
    offending line number and column name) for schema or range violations.
    """
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"trace file not found: {p}")
    records: list[TraceRecord] = []
    with open(p, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise TraceFormatError("empty file, expected header", line=1)
        if tuple(h.strip() for h in header) != TRACE_HEADER:
            raise TraceFormatError(
                f"bad header {header!r}, expected {','.join(TRACE_HEADER)}", line=1
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(TRACE_HEADER):
                raise TraceFormatError(
                    f"expected {len(TRACE_HEADER)} columns, got {len(row)}", line=lineno
                )
            job_id, node_id = row[0], row[1]
            try:
                timestamp = float(row[2])
            except ValueError:
                raise TraceFormatError(
                    f"timestamp {row[2]!r} is not a number", line=lineno, column="timestamp"
                ) from None
            values = []
            for name, raw in zip(RESOURCE_FIELDS, row[3:]):
                try:
                    value = float(raw)
                except ValueError:
                    raise TraceFormatError(
                        f"{name} value {raw!r} is not a number", line=lineno, column=name
                    ) from None
                if not 0.0 <= value <= 1.0:
                    raise TraceFormatError(
                        f"{name}={value} outside [0, 1]", line=lineno, column=name
                    )
                values.append(value)
            records.append(
                TraceRecord(job_id, node_id, timestamp, ResourceProfile.from_iterable(values))
            )
    return records


def write_traces(path, records: Iterable[TraceRecord]) -> None:
    """Write records in the trace CSV schema (UTF-8, LF line endings)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for rec in records:
            u = rec.usage
            writer.writerow(
                [rec.job_id, rec.node_id, repr(rec.timestamp)]
                + [repr(v) for v in u.as_tuple()]
            )


def summarize_job(records: Iterable[TraceRecord], job_id: str) -> ResourceProfile:
    """Mean utilization profile of one job over all of its trace records.

    Uses exact summation (math.fsum), so the result does not depend on
    record order.
    """
    rows = [r.usage.as_tuple() for r in records if r.job_id == job_id]
    if not rows:
        raise ValueError(f"no trace records for job {job_id!r}")
    n = len(rows)
    return ResourceProfile.from_iterable(math.fsum(col) / n for col in zip(*rows))
