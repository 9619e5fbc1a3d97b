import json

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from polarforge.checks import point_cloud_mesh, random_pose
from polarforge.errors import EmptyInput
from polarforge.geometry import Pose
from polarforge.metrics import (
    EvalRecord,
    add_metric,
    adds_metric,
    evaluate_pose,
    recall,
    recall_summary,
    write_recall_json,
    write_records_csv,
)


def test_add_examples(rng):
    mesh = point_cloud_mesh(rng.normal(size=(50, 3)))
    p = random_pose(rng)
    assert add_metric(p, p, mesh) == 0.0
    assert adds_metric(p, p, mesh) == 0.0
    d = np.array([0.3, 0.4, 0.0])
    assert add_metric(p, Pose(p.R, p.t + d), mesh) == pytest.approx(0.5, abs=1e-12)


def test_add_brute_force(rng):
    mesh = point_cloud_mesh(rng.normal(scale=0.1, size=(300, 3)))
    for _ in range(10):
        pa, pb = random_pose(rng), random_pose(rng)
        A = [pa.R @ x + pa.t for x in mesh.vertices]
        B = [pb.R @ x + pb.t for x in mesh.vertices]
        add_ref = np.mean([np.linalg.norm(a - b) for a, b in zip(A, B)])
        adds_ref = np.mean([min(np.linalg.norm(a - b) for b in B) for a in A])
        assert abs(add_metric(pa, pb, mesh) - add_ref) <= 1e-12
        assert abs(adds_metric(pa, pb, mesh) - adds_ref) <= 1e-12


def test_adds_symmetric_cylinder(cylinder_mesh):
    gt = Pose(np.eye(3), [0, 0, 0.5])
    turned = Pose(Rotation.from_rotvec([0, 0, 2 * np.pi * 7 / 48]).as_matrix(), gt.t)
    assert adds_metric(gt, turned, cylinder_mesh) <= 1e-9
    assert add_metric(gt, turned, cylinder_mesh) > 0


def test_adds_never_exceeds_add(rng, cup_mesh):
    for _ in range(20):
        pa, pb = random_pose(rng, 0.05), random_pose(rng, 0.05)
        assert adds_metric(pa, pb, cup_mesh) <= add_metric(pa, pb, cup_mesh) + 1e-15


def test_metrics_invariant_to_common_rigid_motion(rng, cup_mesh):
    pa, pb = random_pose(rng, 0.05), random_pose(rng, 0.05)
    g = random_pose(rng)
    assert add_metric(g.compose(pa), g.compose(pb), cup_mesh) == pytest.approx(add_metric(pa, pb, cup_mesh), abs=1e-12)
    assert adds_metric(g.compose(pa), g.compose(pb), cup_mesh) == pytest.approx(adds_metric(pa, pb, cup_mesh), abs=1e-12)


def test_evaluate_pose_threshold(cup_mesh):
    gt = Pose(np.eye(3), [0, 0, 0.5])
    rec = evaluate_pose(gt, Pose(np.eye(3), [0, 0, 0.5 + 0.05 * cup_mesh.diameter]), cup_mesh)
    assert rec.hit and rec.threshold == pytest.approx(0.1 * cup_mesh.diameter)
    rec = evaluate_pose(gt, Pose(np.eye(3), [0, 0, 0.5 + 0.2 * cup_mesh.diameter]), cup_mesh)
    assert not rec.hit


def test_record_validation():
    with pytest.raises(ValueError):
        EvalRecord("x", 0.2, 0.1, True)


def test_recall_examples():
    hits = [EvalRecord("a", 0.0, 1.0, True)] * 3
    misses = [EvalRecord("a", 2.0, 1.0, False)] * 3
    assert recall(hits) == 100.0
    assert recall(misses) == 0.0
    assert recall(hits + misses) == 50.0
    with pytest.raises(EmptyInput):
        recall([])


def test_report_files(tmp_path):
    recs = [EvalRecord("a", 0.0, 1.0, True), EvalRecord("b", 2.0, 1.0, False), EvalRecord("b", 0.5, 1.0, True)]
    write_records_csv(recs, tmp_path / "add.csv")
    write_recall_json(recs, tmp_path / "recall.json")
    lines = (tmp_path / "add.csv").read_text().splitlines()
    assert lines[0] == "object,add,threshold,hit"
    assert len(lines) == 4
    assert json.loads((tmp_path / "recall.json").read_text()) == recall_summary(recs) == {"a": 100.0, "b": 50.0}
