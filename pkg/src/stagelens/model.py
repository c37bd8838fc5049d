"""Canonical data model shared by every stage of the diagnosis pipeline.

A Trace bundles one complete observation of a cluster run: the job/stage/task
hierarchy recovered from application logs plus per-node metric time series,
all on a single cluster clock (integer milliseconds UTC).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterator, List, Optional, Tuple


class Locality(Enum):
    """Task data locality, merging the Spark and Hadoop vocabularies."""

    PROCESS_LOCAL = "PROCESS_LOCAL"
    NODE_LOCAL = "NODE_LOCAL"
    RACK_LOCAL = "RACK_LOCAL"
    ANY = "ANY"
    OFF_SWITCH = "OFF_SWITCH"
    UNKNOWN = "UNKNOWN"


_LOCALITY_ALIASES = {
    "PROCESS_LOCAL": Locality.PROCESS_LOCAL,
    "NODE_LOCAL": Locality.NODE_LOCAL,
    "NODE_LOCALITY": Locality.NODE_LOCAL,
    "DATA_LOCAL": Locality.NODE_LOCAL,
    "RACK_LOCAL": Locality.RACK_LOCAL,
    "RACK_LOCALITY": Locality.RACK_LOCAL,
    "ANY": Locality.ANY,
    "OFF_SWITCH": Locality.OFF_SWITCH,
}


def parse_locality(text: str) -> Locality:
    """Map a raw locality string to the enum; unknown strings become UNKNOWN."""
    return _LOCALITY_ALIASES.get(str(text).strip().upper(), Locality.UNKNOWN)


@dataclass(frozen=True)
class Task:
    task_id: str
    stage_id: str
    node: str
    launch_time: int  # ms since epoch
    finish_time: int  # ms since epoch
    locality: Locality = Locality.UNKNOWN
    data_size: int = 0  # input bytes
    succeeded: bool = True

    @property
    def runtime(self) -> int:
        return self.finish_time - self.launch_time


@dataclass
class Stage:
    stage_id: str
    job_id: str
    tasks: List[Task] = field(default_factory=list)

    @property
    def start_time(self) -> Optional[int]:
        if not self.tasks:
            return None
        return min(t.launch_time for t in self.tasks)

    @property
    def finish_time(self) -> Optional[int]:
        if not self.tasks:
            return None
        return max(t.finish_time for t in self.tasks)


@dataclass
class Job:
    job_id: str
    stages: List[Stage] = field(default_factory=list)


@dataclass(frozen=True)
class MetricSample:
    node: str
    timestamp: int  # ms since epoch
    values: Dict[str, float] = field(default_factory=dict)


@dataclass
class Trace:
    cluster: List[str] = field(default_factory=list)
    jobs: List[Job] = field(default_factory=list)
    metrics: Dict[str, List[MetricSample]] = field(default_factory=dict)
    clock_offsets: Dict[str, int] = field(default_factory=dict)

    def stages(self) -> Iterator[Stage]:
        for job in self.jobs:
            yield from job.stages

    def validate(self) -> List[str]:
        """Collect every invariant violation instead of stopping at the first."""
        problems: List[str] = []
        if not self.cluster:
            problems.append("cluster must list at least one node")
        known = set(self.cluster)
        for stage in self.stages():
            for task in stage.tasks:
                if task.finish_time < task.launch_time:
                    problems.append(
                        f"task {task.task_id}: finish_time {task.finish_time} "
                        f"< launch_time {task.launch_time}"
                    )
                if task.data_size < 0:
                    problems.append(f"task {task.task_id}: negative data_size")
                if task.stage_id != stage.stage_id:
                    problems.append(
                        f"task {task.task_id}: stage_id {task.stage_id!r} does not "
                        f"match containing stage {stage.stage_id!r}"
                    )
                if task.node not in known:
                    problems.append(
                        f"task {task.task_id}: node {task.node!r} not in cluster"
                    )
        for node, series in self.metrics.items():
            prev = None
            for sample in series:
                if sample.node != node:
                    problems.append(
                        f"metric sample under {node!r} carries node {sample.node!r}"
                    )
                if prev is not None and sample.timestamp <= prev:
                    problems.append(
                        f"metric series for {node}: timestamps not strictly "
                        f"increasing at {sample.timestamp}"
                    )
                prev = sample.timestamp
        return problems


class FindingKind(Enum):
    WORKLOAD_IMBALANCE = "WorkloadImbalance"
    SKEW_DATA_SIZE = "SkewDataSize"
    UNEVEN_PLACEMENT = "UnevenPlacement"
    STRAGGLER = "Straggler"
    ABNORMAL_NODE = "AbnormalNode"
    OUTLIER_METRIC = "OutlierMetric"


@dataclass(frozen=True)
class Finding:
    """One detector verdict.

    Subject convention: subjects[0] is the node; OutlierMetric findings carry
    the metric name in subjects[1]; UnevenPlacement carries the locality tag
    in subjects[1]; task-level skew findings append task ids after the node.
    """

    kind: FindingKind
    stage_id: str
    subjects: Tuple[str, ...]
    score: float
    threshold: float
    detail: str = ""

    def __post_init__(self) -> None:
        if not (math.isfinite(self.score) and math.isfinite(self.threshold)):
            raise ValueError("finding score and threshold must be finite")

    @property
    def node(self) -> str:
        return self.subjects[0]

    @property
    def metric(self) -> Optional[str]:
        if self.kind is FindingKind.OUTLIER_METRIC and len(self.subjects) > 1:
            return self.subjects[1]
        return None
