"""Structured result reports with stable JSON serialization.

Reports are schema-versioned and serialized with sorted keys so two
identical runs produce byte-identical files. Stage timings are the one
wall-clock-dependent field; serialization can drop them for strict
reproducibility comparisons.
"""

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .core import RigidTransform
from .errors import ParseError

REPORT_SCHEMA_VERSION = 1


class StageTimer:
    """Accumulates wall-clock duration per named stage."""

    def __init__(self):
        self.timings = {}

    def stage(self, name: str):
        return _Stage(self, name)


class _Stage:
    def __init__(self, timer, name):
        self.timer = timer
        self.name = name

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.timer.timings[self.name] = (
            self.timer.timings.get(self.name, 0.0)
            + time.perf_counter() - self.start
        )
        return False


@dataclass
class RefineReport:
    pair_id: str
    transform: RigidTransform
    initial_transform: RigidTransform
    winning_set: str
    inlier_count: int
    inlier_trace: list = field(default_factory=list)
    degraded: bool = False
    degraded_sources: list = field(default_factory=list)
    set_sizes: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def to_dict(self, include_timing: bool = True) -> dict:
        d = {
            "schema_version": REPORT_SCHEMA_VERSION,
            "pair_id": self.pair_id,
            "transform": self.transform.matrix().tolist(),
            "initial_transform": self.initial_transform.matrix().tolist(),
            "winning_set": self.winning_set,
            "inlier_count": int(self.inlier_count),
            "inlier_trace": [int(v) for v in self.inlier_trace],
            "degraded": bool(self.degraded),
            "degraded_sources": list(self.degraded_sources),
            "set_sizes": {k: int(v) for k, v in self.set_sizes.items()},
            "metrics": {k: float(v) for k, v in self.metrics.items()},
        }
        if include_timing:
            d["timings"] = {k: float(v) for k, v in self.timings.items()}
        return d

    def to_json(self, include_timing: bool = True) -> str:
        return json.dumps(self.to_dict(include_timing), sort_keys=True, indent=2) + "\n"


def report_from_dict(d: dict) -> RefineReport:
    if not isinstance(d, dict):
        raise ParseError("report root must be a mapping")
    version = d.get("schema_version")
    if version != REPORT_SCHEMA_VERSION:
        raise ParseError(
            f"report schema_version {version!r} is not supported "
            f"(expected {REPORT_SCHEMA_VERSION})"
        )
    try:
        return RefineReport(
            pair_id=d["pair_id"],
            transform=RigidTransform.from_matrix(np.array(d["transform"])),
            initial_transform=RigidTransform.from_matrix(
                np.array(d["initial_transform"])
            ),
            winning_set=d["winning_set"],
            inlier_count=int(d["inlier_count"]),
            inlier_trace=list(d.get("inlier_trace", [])),
            degraded=bool(d.get("degraded", False)),
            degraded_sources=list(d.get("degraded_sources", [])),
            set_sizes=dict(d.get("set_sizes", {})),
            metrics=dict(d.get("metrics", {})),
            timings=dict(d.get("timings", {})),
        )
    except KeyError as exc:
        raise ParseError(f"report is missing field {exc.args[0]!r}") from None


def write_report(path, report: RefineReport, include_timing: bool = True):
    with open(path, "w") as f:
        f.write(report.to_json(include_timing))


def read_report(path) -> RefineReport:
    with open(path) as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: {exc}") from None
    try:
        return report_from_dict(data)
    except ParseError as exc:
        raise ParseError(f"{path}: {exc}") from None
