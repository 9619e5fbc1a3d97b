"""ADD / ADD-S pose errors and recall."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyInput
from .geometry import MeshModel, Pose, transform_points

THRESHOLD_FRACTION = 0.1


def add_metric(p_gt: Pose, p_est: Pose, mesh: MeshModel) -> float:
    """Mean distance between corresponding model points."""
    a = transform_points(p_gt, mesh.vertices)
    b = transform_points(p_est, mesh.vertices)
    return float(np.linalg.norm(a - b, axis=1).mean())


def adds_metric(p_gt: Pose, p_est: Pose, mesh: MeshModel) -> float:
    """Mean distance from each ground-truth model point to the closest estimated one."""
    a = transform_points(p_gt, mesh.vertices)
    b = transform_points(p_est, mesh.vertices)
    return float(cKDTree(b).query(a, k=1)[0].mean())


@dataclass(frozen=True)
class EvalRecord:
    object_id: str
    add: float
    threshold: float
    hit: bool

    def __post_init__(self):
        if self.hit != (self.add < self.threshold):
            raise ValueError("hit must equal add < threshold")


def evaluate_pose(p_gt: Pose, p_est: Pose, mesh: MeshModel, symmetric: bool = False,
                  object_id: str | None = None) -> EvalRecord:
    err = adds_metric(p_gt, p_est, mesh) if symmetric else add_metric(p_gt, p_est, mesh)
    thr = THRESHOLD_FRACTION * mesh.diameter
    return EvalRecord(object_id or mesh.name, err, thr, err < thr)


def recall(records) -> float:
    records = list(records)
    if not records:
        raise EmptyInput("recall of an empty record list")
    return 100.0 * sum(r.hit for r in records) / len(records)


def write_records_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["object", "add", "threshold", "hit"])
        for r in records:
            w.writerow([r.object_id, repr(r.add), repr(r.threshold), int(r.hit)])


def recall_summary(records) -> dict[str, float]:
    by_obj: dict[str, list[EvalRecord]] = {}
    for r in records:
        by_obj.setdefault(r.object_id, []).append(r)
    return {k: recall(v) for k, v in sorted(by_obj.items())}


def write_recall_json(records, path) -> None:
    Path(path).write_text(json.dumps(recall_summary(records), indent=2))
