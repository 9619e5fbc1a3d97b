"""Invariant suite behind ``polarforge selfcheck``.

Each check returns a ``CheckResult``; none of them raise on failure.
"""

from __future__ import annotations

import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import CameraIntrinsics, MeshModel, Pose, load_obj, save_obj, transform_points
from .losses import chamfer_loss, physics_loss, point_matching_loss, select_pseudo_labels
from .meshes import cup, cylinder, uv_sphere
from .metrics import add_metric, adds_metric
from .polarization import (
    MATERIALS,
    THETA_CAP,
    MaterialSpec,
    analytic_dop_from_normal,
    brewster_angle,
    dop_diffuse,
    dop_specular,
    fit_decomposition,
    forward_quadruplet,
    invert_dop,
)
from .rasterizer import rasterize, view_vectors
from .workbench.scenes import generate_scenes, render_scene

TABLE_ETAS = tuple(sorted(set(MATERIALS.values())))


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail} ({self.seconds:.2f}s)"


def _angle_diff_pi(a, b):
    d = np.mod(np.asarray(a) - np.asarray(b), np.pi)
    return np.minimum(d, np.pi - d)


def check_physics_roundtrip(n: int = 100_000, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    i_un = rng.uniform(0.1, 2.0, n)
    rho = rng.uniform(0.0, 0.99, n)
    phi = rng.uniform(0.0, np.pi, n)
    d = fit_decomposition(forward_quadruplet(i_un, rho, phi))
    err = max(np.abs(d.i_un - i_un).max(), np.abs(d.rho - rho).max(),
              _angle_diff_pi(d.phi, phi).max())
    return CheckResult("physics round-trip", bool(err < 1e-9), f"max error {err:.3e} over {n} samples")


def check_brewster() -> CheckResult:
    errs = [abs(dop_specular(brewster_angle(eta), eta) - 1.0) for eta in TABLE_ETAS]
    worst = max(errs)
    return CheckResult("Brewster identity", bool(worst <= 1e-12), f"max |rho_s - 1| = {worst:.3e}")


def check_inversion(n: int = 10_000, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for eta in TABLE_ETAS:
        tb = brewster_angle(eta)
        th_d = rng.uniform(0.0, THETA_CAP, n)
        th_s1 = rng.uniform(0.0, tb, n)
        th_s2 = rng.uniform(tb, THETA_CAP, n)
        worst = max(worst,
                    np.abs(invert_dop(dop_diffuse(th_d, eta), eta).theta_d - th_d).max(),
                    np.abs(invert_dop(dop_specular(th_s1, eta), eta).theta_s1 - th_s1).max(),
                    np.abs(invert_dop(dop_specular(th_s2, eta), eta).theta_s2 - th_s2).max())
    return CheckResult("DoP inversion", bool(worst < 1e-8),
                       f"max zenith error {worst:.3e} ({n} per branch per eta)")


def _physics_at(pose: Pose, obs, mesh: MeshModel) -> float:
    rb = rasterize(mesh, pose, obs.K)
    valid = rb.mask & obs.mask_obs
    if not valid.any():
        return np.inf
    a = analytic_dop_from_normal(rb.normal_map, view_vectors(obs.K), obs.material,
                                 clamp_backfacing=True)
    return physics_loss(obs.rho_map, a, valid)


def closure_meshes() -> list[MeshModel]:
    """Sphere, cylinder and a cup that goes through an OBJ round-trip."""
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "cup.obj"
        save_obj(cup(), path)
        loaded = load_obj(path)
    return [uv_sphere(0.05, 32, 64), cylinder(0.03, 0.1, 48), loaded]


def check_closure(n_scenes: int = 50, seed: int = 0) -> CheckResult:
    meshes = closure_meshes()
    materials = [MaterialSpec.named(k) for k in sorted(MATERIALS)]
    rng = np.random.default_rng(seed)
    worst_gt, exceed, total = 0.0, 0, 0
    for i in range(n_scenes):
        mesh = meshes[i % len(meshes)]
        mat = materials[i % len(materials)]
        sc = generate_scenes(mesh, 1, seed=seed * 1000 + i, material=mat)[0]
        obs = render_scene(mesh, sc.pose, sc.intrinsics, mat, sc.shading, sc.mode).observation
        gt = _physics_at(sc.pose, obs, mesh)
        axis = rng.normal(size=3)
        pert = sc.pose.perturbed(np.deg2rad(10.0) * axis / np.linalg.norm(axis), np.zeros(3))
        worst_gt = max(worst_gt, gt)
        exceed += _physics_at(pert, obs, mesh) > gt
        total += 1
    frac = exceed / total
    ok = worst_gt < 1e-7 and frac >= 0.95
    return CheckResult("physics-loss closure", bool(ok),
                       f"max GT loss {worst_gt:.3e}; perturbed > GT in {100 * frac:.0f}% of {total}")


def sphere_silhouette_cases() -> list[tuple[float, float]]:
    dists = np.linspace(2.5, 8.0, 5)
    focals = np.array([250.0, 400.0, 550.0, 700.0])
    return [(float(z), float(f)) for z in dists for f in focals]


def check_silhouette() -> CheckResult:
    sphere = uv_sphere(1.0, 64, 128)
    worst = 0.0
    for z, f in sphere_silhouette_cases():
        r_px = f / np.sqrt(z**2 - 1.0)
        size = int(2 * np.ceil(r_px) + 16)
        K = CameraIntrinsics.centered(f, size, size)
        rb = rasterize(sphere, Pose(np.eye(3), [0.0, 0.0, z]), K)
        rel = abs(rb.mask.sum() / (np.pi * r_px**2) - 1.0)
        worst = max(worst, rel)
    n = len(sphere_silhouette_cases())
    return CheckResult("sphere silhouette", bool(worst < 0.01),
                       f"max relative area error {worst:.4%} over {n} cases")


def random_pose(rng: np.random.Generator, t_scale: float = 1.0) -> Pose:
    from scipy.spatial.transform import Rotation
    R = Rotation.random(random_state=rng).as_matrix()
    return Pose(R, rng.normal(scale=t_scale, size=3) + [0.0, 0.0, 3.0])


def point_cloud_mesh(points) -> MeshModel:
    pts = np.asarray(points, dtype=np.float64)
    normals = np.tile([0.0, 0.0, 1.0], (len(pts), 1))
    return MeshModel(pts, np.zeros((0, 3), dtype=np.int64), normals, name="points")


def check_metrics(n_pairs: int = 100, n_points: int = 300, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_pairs):
        mesh = point_cloud_mesh(rng.normal(scale=0.05, size=(n_points, 3)))
        pa, pb = random_pose(rng, 0.1), random_pose(rng, 0.1)
        A = np.array([pa.R @ x + pa.t for x in mesh.vertices])
        B = np.array([pb.R @ x + pb.t for x in mesh.vertices])
        add_ref = np.mean([np.linalg.norm(A[i] - B[i]) for i in range(n_points)])
        adds_ref = np.mean([np.sqrt(((B - a) ** 2).sum(axis=1)).min() for a in A])
        worst = max(worst, abs(add_metric(pa, pb, mesh) - add_ref),
                    abs(adds_metric(pa, pb, mesh) - adds_ref))
    cyl = cylinder(0.04, 0.1, 48)
    gt = Pose(np.eye(3), [0.0, 0.0, 0.5])
    ang = 2 * np.pi * 5 / 48
    turned = Pose(np.array([[np.cos(ang), -np.sin(ang), 0], [np.sin(ang), np.cos(ang), 0], [0, 0, 1]]),
                  gt.t)
    adds_sym, add_sym = adds_metric(gt, turned, cyl), add_metric(gt, turned, cyl)
    ok = worst <= 1e-12 and adds_sym <= 1e-9 and add_sym > 0
    return CheckResult("ADD/ADD-S oracles", bool(ok),
                       f"max oracle gap {worst:.2e}; cylinder ADD-S {adds_sym:.1e}, ADD {add_sym:.3e}")


def check_losses(seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for n_a, n_b in ((50, 80), (200, 200), (500, 450)):
        A = rng.normal(size=(n_a, 3))
        B = rng.normal(size=(n_b, 3))
        ab = np.mean([min(np.linalg.norm(p - q) for q in B) for p in A])
        ba = np.mean([min(np.linalg.norm(p - q) for p in A) for q in B])
        worst = max(worst, abs(chamfer_loss(A, B) - (ab + ba)))
    for _ in range(20):
        mesh = point_cloud_mesh(rng.normal(size=(100, 3)))
        pa, pb = random_pose(rng), random_pose(rng)
        XA, XB = transform_points(pa, mesh.vertices), transform_points(pb, mesh.vertices)
        ref = sum(sum(abs(XA[i, k] - XB[i, k]) for k in range(3)) for i in range(100)) / 100
        worst = max(worst, abs(point_matching_loss(pa, pb, mesh) - ref))

    same = np.zeros((4, 4), dtype=bool)
    same[1:3, 1:3] = True
    left = np.zeros((4, 4), dtype=bool)
    left[:, :2] = True
    right = np.zeros((4, 4), dtype=bool)
    right[:, 2:] = True
    mid = np.zeros((4, 4), dtype=bool)
    mid[:, 1:3] = True
    p_same = select_pseudo_labels(same, same)
    p_disj = select_pseudo_labels(left, right)
    p_half = select_pseudo_labels(left, mid)
    policy_ok = (p_same.delta == 0.0 and p_same.lambda1 == 1.0 and p_same.source == "rendered"
                 and p_disj.delta == 1.0 and p_disj.lambda1 == 0.0 and p_disj.source == "predicted"
                 and abs(p_half.delta - 2.0 / 3.0) < 1e-15)
    ok = worst <= 1e-12 and policy_ok
    return CheckResult("loss oracles", bool(ok),
                       f"max oracle gap {worst:.2e}; pseudo-label cases {'ok' if policy_ok else 'WRONG'}")


ALL_CHECKS = (
    check_physics_roundtrip,
    check_brewster,
    check_inversion,
    check_closure,
    check_silhouette,
    check_metrics,
    check_losses,
)


def run_all(report=print) -> list[CheckResult]:
    results = []
    for fn in ALL_CHECKS:
        t0 = time.perf_counter()
        try:
            res = fn()
        except Exception as exc:  # a crash is a failed invariant
            res = CheckResult(fn.__name__, False, f"raised {type(exc).__name__}: {exc}")
        res.seconds = time.perf_counter() - t0
        report(res.line())
        results.append(res)
    return results
