"""Co-location-aware cluster scheduling: profile-based job grouping,
learned group-pair preferences, selection policies, and a deterministic
cluster simulator with an experiment harness."""

from .grouping import GroupingModel, assign_group, fit_groups, profile_sample_run
from .preferences import GoodnessSample, PreferenceMatrix, colocation_goodness
from .scheduler import (
    RunResult,
    ScheduleRunner,
    SchedulerPolicy,
    SchedulingDecision,
    on_job_finished,
    pick_within_group,
    select_next,
    waiting_limit_override,
)
from .sim import (
    ClusterSim,
    ContentionSnapshot,
    JobKind,
    NodeState,
    Workload,
    WorkloadSpec,
    default_catalog,
    generate_workload,
)
from .workload import (
    Job,
    JobQueue,
    ResourceProfile,
    TraceRecord,
    load_traces,
    summarize_job,
    write_traces,
)

__all__ = [
    "ClusterSim",
    "ContentionSnapshot",
    "GoodnessSample",
    "GroupingModel",
    "Job",
    "JobKind",
    "JobQueue",
    "NodeState",
    "PreferenceMatrix",
    "ResourceProfile",
    "RunResult",
    "ScheduleRunner",
    "SchedulerPolicy",
    "SchedulingDecision",
    "TraceRecord",
    "Workload",
    "WorkloadSpec",
    "assign_group",
    "colocation_goodness",
    "default_catalog",
    "fit_groups",
    "generate_workload",
    "load_traces",
    "on_job_finished",
    "pick_within_group",
    "profile_sample_run",
    "select_next",
    "summarize_job",
    "waiting_limit_override",
    "write_traces",
]

__version__ = "0.1.0"
