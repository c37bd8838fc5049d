"""Application-level detectors: workload imbalance, skew data size, uneven
data placement and the straggler-node screen."""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .model import Locality

DEFAULT_PRIORITIES: Dict[Locality, float] = {
    Locality.PROCESS_LOCAL: 0.0,
    Locality.NODE_LOCAL: 1.0,
    Locality.RACK_LOCAL: 1.0,
    Locality.ANY: 2.0,
    Locality.OFF_SWITCH: 2.0,
    Locality.UNKNOWN: 1.0,
}


@dataclass(frozen=True)
class ImbalanceConfig:
    bc: float = 0.1  # tolerated imbalance as a fraction of the stage mean
    th_ub: float = 0.6  # unbalanced-stage ratio above which a job is unbalanced

    def __post_init__(self) -> None:
        if not 0 < self.bc < 1:
            raise ValueError("balance coefficient must be in (0,1)")
        if not 0 < self.th_ub <= 1:
            raise ValueError("job imbalance threshold must be in (0,1]")


@dataclass(frozen=True)
class PlacementConfig:
    priorities: Mapping[Locality, float] = field(
        default_factory=lambda: dict(DEFAULT_PRIORITIES)
    )

    def __post_init__(self) -> None:
        for loc, weight in self.priorities.items():
            if weight < 0:
                raise ValueError(f"priority for {loc} must be nonnegative")


@dataclass
class ImbalanceResult:
    evaluable: bool
    unbalanced: bool = False
    mean: float = 0.0
    diff: Dict[str, float] = field(default_factory=dict)
    tilt: List[Tuple[float, str]] = field(default_factory=list)  # descending
    flagged: List[str] = field(default_factory=list)  # tilt-rank order


def detect_workload_imbalance(
    tnum: Mapping[str, int], cfg: ImbalanceConfig = ImbalanceConfig()
) -> ImbalanceResult:
    """Per-stage task-count imbalance.

    A node is flagged when its count deviates from the mean by more than
    bc*mean; the stage is unbalanced when the summed absolute deviations
    exceed bc*mean*p. Tilt ranks how far past the tolerance each node sits.
    """
    p = len(tnum)
    if p < 1:
        return ImbalanceResult(evaluable=False)
    mean = sum(tnum.values()) / p
    if mean == 0:
        return ImbalanceResult(evaluable=False)

    tolerance = cfg.bc * mean
    diff = {node: count - mean for node, count in tnum.items()}
    total_diff = sum(abs(d) for d in diff.values())
    tilt = sorted(
        ((abs(abs(d) - tolerance), node) for node, d in diff.items()),
        key=lambda item: (-item[0], item[1]),
    )
    flagged_set = {node for node, d in diff.items() if abs(d) > tolerance}
    flagged = [node for _, node in tilt if node in flagged_set]
    return ImbalanceResult(
        evaluable=True,
        unbalanced=total_diff > tolerance * p,
        mean=mean,
        diff=diff,
        tilt=tilt,
        flagged=flagged,
    )


@dataclass
class JobImbalance:
    evaluable: bool
    unbalanced: bool = False
    ratio_ub: float = 0.0
    unbalanced_stages: int = 0
    evaluable_stages: int = 0


def judge_job_imbalance(
    stage_results: Sequence[ImbalanceResult], cfg: ImbalanceConfig = ImbalanceConfig()
) -> JobImbalance:
    """Job verdict: fraction of unbalanced stages among evaluable ones."""
    evaluable = [r for r in stage_results if r.evaluable]
    if not evaluable:
        return JobImbalance(evaluable=False)
    count_ub = sum(1 for r in evaluable if r.unbalanced)
    ratio = count_ub / len(evaluable)
    return JobImbalance(
        evaluable=True,
        unbalanced=ratio > cfg.th_ub,
        ratio_ub=ratio,
        unbalanced_stages=count_ub,
        evaluable_stages=len(evaluable),
    )


@dataclass
class SkewResult:
    evaluable: bool
    median: float = 0.0
    flagged_tasks: List[Tuple[str, str, float]] = field(default_factory=list)  # (node, task, ratio)
    flagged_nodes: List[Tuple[str, float]] = field(default_factory=list)  # (node, ratio)


def detect_skew_data_size(
    data_size: Sequence[Tuple[str, str, int]],
    th_size: float = 1.5,
    flag_small: bool = False,
) -> SkewResult:
    """Flag tasks/nodes whose data size outruns the stage median by th_size.

    flag_small additionally tests the reciprocal ratio, catching much-smaller
    sizes; it defaults off.
    """
    if th_size <= 1:
        raise ValueError("th_size must exceed 1")
    if not data_size:
        return SkewResult(evaluable=False)
    sizes = [s for _, _, s in data_size]
    median = statistics.median(sizes)
    if median == 0:
        return SkewResult(evaluable=False)

    def skewed(value: float) -> Optional[float]:
        ratio = value / median
        if ratio > th_size:
            return ratio
        if flag_small and value > 0 and median / value > th_size:
            return median / value
        return None

    flagged_tasks = []
    for node, task_id, size in data_size:
        ratio = skewed(size)
        if ratio is not None:
            flagged_tasks.append((node, task_id, ratio))

    per_node: Dict[str, List[int]] = {}
    for node, _, size in data_size:
        per_node.setdefault(node, []).append(size)
    flagged_nodes = []
    for node in sorted(per_node):
        ratio = skewed(statistics.fmean(per_node[node]))
        if ratio is not None:
            flagged_nodes.append((node, ratio))
    return SkewResult(
        evaluable=True,
        median=median,
        flagged_tasks=flagged_tasks,
        flagged_nodes=flagged_nodes,
    )


@dataclass(frozen=True)
class PlacementEntry:
    locality: Locality
    node: str
    ratio: float
    outlier_count: int


def detect_uneven_placement(
    locality: Sequence[Tuple[str, Locality, int]],
    cfg: PlacementConfig = PlacementConfig(),
    total: Optional[int] = None,
) -> List[PlacementEntry]:
    """Locality-weighted share of long-runtime outlier tasks per node.

    Distances are runtimes minus the stage median; the suspicion group holds
    tasks beyond the mean absolute deviation, and an outlier must additionally
    clear 1.96 standard deviations on the long-runtime side.
    """
    if len(locality) < 2:
        raise ValueError("uneven placement needs at least two tasks")
    runtimes = [float(r) for _, _, r in locality]
    num = total if total is not None else len(locality)
    med = statistics.median(runtimes)
    mean_rt = sum(runtimes) / len(runtimes)
    std = (sum((r - mean_rt) ** 2 for r in runtimes) / len(runtimes)) ** 0.5
    if std == 0:
        return []
    dis = [r - med for r in runtimes]
    mad = sum(abs(d) for d in dis) / len(dis)

    counts: Dict[Tuple[str, Locality], int] = {}
    for (node, loc, _), d in zip(locality, dis):
        if abs(d) <= mad:
            continue
        if abs(abs(d) - mad) > 1.96 * std and d > 0:
            counts[(node, loc)] = counts.get((node, loc), 0) + 1

    entries = []
    for (node, loc), count in sorted(counts.items(), key=lambda kv: (kv[0][0], kv[0][1].value)):
        ratio = count / num * cfg.priorities.get(loc, DEFAULT_PRIORITIES[Locality.UNKNOWN])
        if ratio > 0:
            entries.append(PlacementEntry(locality=loc, node=node, ratio=ratio, outlier_count=count))
    entries.sort(key=lambda e: (-e.ratio, e.node, e.locality.value))
    return entries


@dataclass
class StragglerResult:
    evaluable: bool
    median: float = 0.0
    stragglers: List[Tuple[str, float]] = field(default_factory=list)  # (node, scale)


def detect_stragglers(
    mean_runtime: Mapping[str, float], th_d: float = 1.5
) -> StragglerResult:
    """Nodes whose mean task runtime exceeds th_d times the cluster median."""
    if len(mean_runtime) < 2:
        return StragglerResult(evaluable=False)
    med = statistics.median(mean_runtime.values())
    if med == 0:
        return StragglerResult(evaluable=False)
    stragglers = [
        (node, rt / med)
        for node, rt in sorted(mean_runtime.items())
        if rt / med > th_d
    ]
    stragglers.sort(key=lambda item: (-item[1], item[0]))
    return StragglerResult(evaluable=True, median=med, stragglers=stragglers)
