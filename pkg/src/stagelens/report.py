"""Pipeline orchestration and diagnosis-report rendering.

diagnose() runs every detector over every stage and assembles one report;
render_report() emits either the human-readable table layout or a structured
JSON document that round-trips byte-identically.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Mapping, Tuple

from . import appdetect, metricdetect, nodedetect
from .appdetect import ImbalanceConfig, PlacementConfig
from .correlate import UltrashortPolicy, build_datasets, slice_metrics, stage_window
from .metricdetect import OutlierConfig
from .model import Finding, FindingKind, Locality, Trace
from .nodedetect import SimilarityConfig

REPORT_SCHEMA = "stagelens-report/1"


class DiagnoseError(Exception):
    pass


_PRIORITY_KEYS = {
    "pri_process_local": Locality.PROCESS_LOCAL,
    "pri_node_local": Locality.NODE_LOCAL,
    "pri_rack_local": Locality.RACK_LOCAL,
    "pri_any": Locality.ANY,
    "pri_off_switch": Locality.OFF_SWITCH,
    "pri_unknown": Locality.UNKNOWN,
}


@dataclass(frozen=True)
class PipelineConfig:
    """Every user-tunable threshold, with the published defaults."""

    bc: float = 0.1
    th_ub: float = 0.6
    th_size: float = 1.5
    th_d: float = 1.5
    th_simi: float = 0.5
    flag_small: bool = False
    priorities: Tuple[Tuple[str, float], ...] = tuple(
        sorted((loc.value, w) for loc, w in appdetect.DEFAULT_PRIORITIES.items())
    )
    transform: str = "mean"
    representative: str = "max_min"
    dmin: float = 0.6
    pct: float = 1.0
    ccrate: float = 0.95
    magnitude_gap: int = 2
    ultrashort_absolute_ms: int = 1000
    ultrashort_median_fraction: float = 0.05
    homogeneous: bool = True

    def imbalance(self) -> ImbalanceConfig:
        return ImbalanceConfig(bc=self.bc, th_ub=self.th_ub)

    def placement(self) -> PlacementConfig:
        return PlacementConfig(
            priorities={Locality(name): w for name, w in self.priorities}
        )

    def similarity(self) -> SimilarityConfig:
        return SimilarityConfig(th_simi=self.th_simi, homogeneous=self.homogeneous)

    def outlier(self) -> OutlierConfig:
        return OutlierConfig(
            transform=self.transform,
            representative=self.representative,
            dmin=self.dmin,
            pct=self.pct,
            ccrate=self.ccrate,
            magnitude_gap=self.magnitude_gap,
        )

    def ultrashort(self) -> UltrashortPolicy:
        return UltrashortPolicy(
            absolute_ms=self.ultrashort_absolute_ms,
            median_fraction=self.ultrashort_median_fraction,
        )

    def mode_label(self) -> str:
        transform = "Mean-Value" if self.transform == "mean" else "FFT"
        representative = "median" if self.representative == "median" else "max/min"
        return f"[{transform},{representative},CCRate_d={self.ccrate:g},dmin={self.dmin:g}]"


_BOOL_KEYS = ("flag_small", "homogeneous")
_INT_KEYS = ("magnitude_gap", "ultrashort_absolute_ms")
_STR_KEYS = ("transform", "representative")


def config_from_mapping(values: Mapping[str, str]) -> PipelineConfig:
    """Build a config from flat text keys (file or CLI), validating names."""
    cfg = PipelineConfig()
    priorities = dict(cfg.priorities)
    updates: Dict[str, object] = {}
    for key, raw in values.items():
        key = key.strip().lower()
        if key in _PRIORITY_KEYS:
            priorities[_PRIORITY_KEYS[key].value] = float(raw)
        elif key in _BOOL_KEYS:
            updates[key] = str(raw).strip().lower() in ("1", "true", "yes", "on")
        elif key in _INT_KEYS:
            updates[key] = int(raw)
        elif key in _STR_KEYS:
            updates[key] = str(raw).strip()
        elif key in ("bc", "th_ub", "th_size", "th_d", "th_simi", "dmin", "pct",
                     "ccrate", "ultrashort_median_fraction"):
            updates[key] = float(raw)
        else:
            raise DiagnoseError(f"unknown configuration key {key!r}")
    updates["priorities"] = tuple(sorted(priorities.items()))
    return replace(cfg, **updates)


def load_config(path: str) -> PipelineConfig:
    """Flat key=value file; blank lines and #-comments are ignored."""
    values: Dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise DiagnoseError(f"{path}:{line_no}: expected key = value")
            key, _, value = stripped.partition("=")
            values[key.strip()] = value.strip()
    return config_from_mapping(values)


@dataclass
class StageReport:
    stage_id: str
    stragglers: List[str] = field(default_factory=list)
    imbalance_nodes: List[str] = field(default_factory=list)  # tilt-rank order
    skew_nodes: List[Tuple[str, float]] = field(default_factory=list)
    skew_tasks: List[Tuple[str, str, float]] = field(default_factory=list)
    placement: List[Tuple[str, str, float]] = field(default_factory=list)  # node, locality, ratio
    similarity_nodes: List[str] = field(default_factory=list)
    similarity_values: List[float] = field(default_factory=list)
    abnormal_nodes: List[str] = field(default_factory=list)
    outliers: Dict[str, List[str]] = field(default_factory=dict)  # node -> metrics
    findings: List[Finding] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)


@dataclass
class JobSummary:
    job_id: str
    evaluable: bool
    unbalanced: bool
    ratio_ub: float


@dataclass
class DiagnosisReport:
    mode_label: str
    stages: List[StageReport] = field(default_factory=list)
    jobs: List[JobSummary] = field(default_factory=list)

    def findings(self) -> List[Finding]:
        out: List[Finding] = []
        for stage in self.stages:
            out.extend(stage.findings)
        return out


def _diagnose_stage(
    trace: Trace, stage, cfg: PipelineConfig
) -> Tuple[StageReport, appdetect.ImbalanceResult]:
    report = StageReport(stage_id=stage.stage_id)
    window = stage_window(stage)
    slices = slice_metrics(trace, window)
    if slices.gaps:
        report.warnings.append(
            "no in-window metric samples for: " + ", ".join(slices.gaps)
        )
    datasets = build_datasets(stage, slices, trace.cluster, cfg.ultrashort())

    # Straggler screen over per-node mean runtimes of successful tasks.
    runtimes: Dict[str, List[int]] = {}
    for task in stage.tasks:
        if task.succeeded:
            runtimes.setdefault(task.node, []).append(task.runtime)
    means = {node: sum(rs) / len(rs) for node, rs in runtimes.items()}
    straggle = appdetect.detect_stragglers(means, cfg.th_d)
    if straggle.evaluable:
        for node, scale in straggle.stragglers:
            report.stragglers.append(node)
            report.findings.append(
                Finding(FindingKind.STRAGGLER, stage.stage_id, (node,), scale, cfg.th_d)
            )
    else:
        report.warnings.append("straggler screen not evaluable")

    imbalance = appdetect.detect_workload_imbalance(datasets.tnum, cfg.imbalance())
    if imbalance.evaluable:
        if imbalance.unbalanced:
            tilt = dict((node, t) for t, node in imbalance.tilt)
            for node in imbalance.flagged:
                report.imbalance_nodes.append(node)
                report.findings.append(
                    Finding(
                        FindingKind.WORKLOAD_IMBALANCE,
                        stage.stage_id,
                        (node,),
                        tilt[node],
                        cfg.bc * imbalance.mean,
                    )
                )
    else:
        report.warnings.append("workload imbalance not evaluable (no countable tasks)")

    skew = appdetect.detect_skew_data_size(datasets.data_size, cfg.th_size, cfg.flag_small)
    if skew.evaluable:
        for node, ratio in skew.flagged_nodes:
            report.skew_nodes.append((node, ratio))
            report.findings.append(
                Finding(FindingKind.SKEW_DATA_SIZE, stage.stage_id, (node,), ratio, cfg.th_size)
            )
        for node, task_id, ratio in skew.flagged_tasks:
            report.skew_tasks.append((node, task_id, ratio))
            report.findings.append(
                Finding(
                    FindingKind.SKEW_DATA_SIZE,
                    stage.stage_id,
                    (node, f"task:{task_id}"),
                    ratio,
                    cfg.th_size,
                )
            )
    else:
        report.warnings.append("skew screen not evaluable (median data size is zero)")

    if len(datasets.locality) >= 2:
        for entry in appdetect.detect_uneven_placement(
            datasets.locality, cfg.placement(), total=len(datasets.locality)
        ):
            report.placement.append((entry.node, entry.locality.value, entry.ratio))
            report.findings.append(
                Finding(
                    FindingKind.UNEVEN_PLACEMENT,
                    stage.stage_id,
                    (entry.node, entry.locality.value),
                    entry.ratio,
                    0.0,
                )
            )

    similarity = nodedetect.detect_abnormal_nodes(datasets.vectors, cfg.similarity())
    if similarity.evaluable:
        report.similarity_nodes = sorted(similarity.similarity)
        report.similarity_values = [
            similarity.similarity[n] for n in report.similarity_nodes
        ]
        for node in similarity.abnormal:
            report.abnormal_nodes.append(node)
            report.findings.append(
                Finding(
                    FindingKind.ABNORMAL_NODE,
                    stage.stage_id,
                    (node,),
                    similarity.similarity[node],
                    cfg.th_simi,
                )
            )
        if similarity.caveat:
            report.warnings.append(similarity.caveat)
        if similarity.skipped:
            report.warnings.append(
                "similarity skipped nodes: " + ", ".join(similarity.skipped)
            )
    else:
        report.warnings.append("abnormal-node screen not evaluable")

    diagnosis = metricdetect.diagnose_outlier_metrics(datasets, cfg.outlier())
    report.warnings.extend(diagnosis.warnings)
    if diagnosis.evaluable:
        report.outliers = diagnosis.by_node()
        for metric, node, branch, distance in diagnosis.findings:
            report.findings.append(
                Finding(
                    FindingKind.OUTLIER_METRIC,
                    stage.stage_id,
                    (node, metric),
                    distance,
                    cfg.dmin,
                    detail=f"branch={branch}",
                )
            )
    return report, imbalance


def diagnose(trace: Trace, cfg: PipelineConfig = PipelineConfig()) -> DiagnosisReport:
    """Run every detector per stage; partial failures become warnings."""
    stages = list(trace.stages())
    if not stages:
        raise DiagnoseError("trace holds no stages to diagnose")
    report = DiagnosisReport(mode_label=cfg.mode_label())
    per_job_results: Dict[str, List[appdetect.ImbalanceResult]] = {}
    for job in trace.jobs:
        for stage in job.stages:
            if not stage.tasks:
                report.stages.append(
                    StageReport(stage_id=stage.stage_id, warnings=["stage has no tasks"])
                )
                continue
            stage_report, imbalance = _diagnose_stage(trace, stage, cfg)
            report.stages.append(stage_report)
            per_job_results.setdefault(job.job_id, []).append(imbalance)
    for job in trace.jobs:
        verdict = appdetect.judge_job_imbalance(
            per_job_results.get(job.job_id, []), cfg.imbalance()
        )
        report.jobs.append(
            JobSummary(
                job_id=job.job_id,
                evaluable=verdict.evaluable,
                unbalanced=verdict.unbalanced,
                ratio_ub=verdict.ratio_ub,
            )
        )
    return report


def _null_or(parts: List[str]) -> str:
    return ", ".join(parts) if parts else "Null"


def _render_text(report: DiagnosisReport) -> str:
    lines: List[str] = []
    for stage in report.stages:
        lines.append(f"Stage id: {stage.stage_id}")
        lines.append(f"Detected straggle outlier node: {_null_or(stage.stragglers)}")
        lines.append(f"Detected workload imbalance: {_null_or(stage.imbalance_nodes)}")
        lines.append("--- Data skew diagnosis:")
        skew_parts = [f"{node} (x{ratio:.2f})" for node, ratio in stage.skew_nodes]
        skew_parts += [f"{node}/{task} (x{ratio:.2f})" for node, task, ratio in stage.skew_tasks]
        lines.append(f"    Skew data size: {_null_or(skew_parts)}")
        placement_parts = [
            f"{node} [{locality}:{ratio:.5f}]" for node, locality, ratio in stage.placement
        ]
        lines.append(f"    Uneven data placement: {_null_or(placement_parts)}")
        lines.append("--- Abnormal node diagnosis:")
        if stage.similarity_nodes:
            names = "[" + ", ".join(f"'{n}'" for n in stage.similarity_nodes) + "]"
            values = "[" + ", ".join(f"{v:.4f}" for v in stage.similarity_values) + "]"
            lines.append(f"    Similarity analysis: Similarity ({names}, other nodes): {values}")
        else:
            lines.append("    Similarity analysis: Null")
        lines.append(f"    Detected abnormal node: {_null_or(stage.abnormal_nodes)}")
        lines.append("--- Outlier metrics diagnosis:")
        if stage.outliers:
            per_node = "; ".join(
                f"{node}:({', '.join(metrics)})" for node, metrics in stage.outliers.items()
            )
            lines.append(f"    Mode: {report.mode_label}: {per_node}")
        else:
            lines.append(f"    Mode: {report.mode_label}: Null")
        if stage.warnings:
            for warning in stage.warnings:
                lines.append(f"    Warning: {warning}")
        lines.append("")
    return "\n".join(lines)


def _finding_to_dict(finding: Finding) -> dict:
    return {
        "kind": finding.kind.value,
        "stage_id": finding.stage_id,
        "subjects": list(finding.subjects),
        "score": finding.score,
        "threshold": finding.threshold,
        "detail": finding.detail,
    }


def _finding_from_dict(data: dict) -> Finding:
    return Finding(
        kind=FindingKind(data["kind"]),
        stage_id=data["stage_id"],
        subjects=tuple(data["subjects"]),
        score=data["score"],
        threshold=data["threshold"],
        detail=data.get("detail", ""),
    )


def report_to_dict(report: DiagnosisReport) -> dict:
    return {
        "schema": REPORT_SCHEMA,
        "mode_label": report.mode_label,
        "stages": [
            {
                "stage_id": s.stage_id,
                "stragglers": list(s.stragglers),
                "imbalance_nodes": list(s.imbalance_nodes),
                "skew_nodes": [[n, r] for n, r in s.skew_nodes],
                "skew_tasks": [[n, t, r] for n, t, r in s.skew_tasks],
                "placement": [[n, l, r] for n, l, r in s.placement],
                "similarity_nodes": list(s.similarity_nodes),
                "similarity_values": list(s.similarity_values),
                "abnormal_nodes": list(s.abnormal_nodes),
                "outliers": {k: list(v) for k, v in s.outliers.items()},
                "findings": [_finding_to_dict(f) for f in s.findings],
                "warnings": list(s.warnings),
            }
            for s in report.stages
        ],
        "jobs": [asdict(j) for j in report.jobs],
    }


def report_from_dict(data: dict) -> DiagnosisReport:
    if data.get("schema") != REPORT_SCHEMA:
        raise DiagnoseError(f"structured report must declare schema {REPORT_SCHEMA!r}")
    stages = []
    for s in data.get("stages", []):
        stages.append(
            StageReport(
                stage_id=s["stage_id"],
                stragglers=list(s.get("stragglers", [])),
                imbalance_nodes=list(s.get("imbalance_nodes", [])),
                skew_nodes=[(n, r) for n, r in s.get("skew_nodes", [])],
                skew_tasks=[(n, t, r) for n, t, r in s.get("skew_tasks", [])],
                placement=[(n, l, r) for n, l, r in s.get("placement", [])],
                similarity_nodes=list(s.get("similarity_nodes", [])),
                similarity_values=list(s.get("similarity_values", [])),
                abnormal_nodes=list(s.get("abnormal_nodes", [])),
                outliers={k: list(v) for k, v in s.get("outliers", {}).items()},
                findings=[_finding_from_dict(f) for f in s.get("findings", [])],
                warnings=list(s.get("warnings", [])),
            )
        )
    jobs = [JobSummary(**j) for j in data.get("jobs", [])]
    return DiagnosisReport(mode_label=data["mode_label"], stages=stages, jobs=jobs)


def render_report(report: DiagnosisReport, format: str = "text") -> bytes:
    """Serialize a report; 'structured' renders parse/render byte-stable JSON."""
    if format == "text":
        return _render_text(report).encode("utf-8")
    if format == "structured":
        return (
            json.dumps(report_to_dict(report), sort_keys=True, separators=(",", ":"))
            + "\n"
        ).encode("utf-8")
    raise DiagnoseError(f"unknown report format {format!r} (expected text|structured)")


def parse_report(data: bytes) -> DiagnosisReport:
    return report_from_dict(json.loads(data.decode("utf-8")))
