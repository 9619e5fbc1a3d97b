"""End-to-end acceptance criteria, one test per criterion.

Each test prints a single ``[PASS]``/``[FAIL]`` line (visible with ``-s`` or
in the terminal summary) and then asserts.
"""

import subprocess
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from polarforge.geometry import CameraIntrinsics, MeshModel, Pose, load_obj, save_obj
from polarforge.losses import chamfer_loss, physics_loss, point_matching_loss, select_pseudo_labels
from polarforge.meshes import cup, cylinder, uv_sphere
from polarforge.metrics import add_metric, adds_metric
from polarforge.polarization import (
    THETA_CAP,
    MaterialSpec,
    analytic_dop_from_normal,
    dop_diffuse,
    dop_specular,
    fit_decomposition,
    forward_quadruplet,
    invert_dop,
)
from polarforge.rasterizer import rasterize, view_vectors
from polarforge.refine import objective_terms, refine_pose
from polarforge.workbench.scenes import generate_scenes, render_scene

TABLE = {"plastics": 1.50, "glass": 1.52, "stainless steel": 2.75}


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number} {title}: {detail}")
    return emit


def _random_pose(rng, t_scale=0.1):
    return Pose(Rotation.random(random_state=rng).as_matrix(), rng.normal(scale=t_scale, size=3) + [0, 0, 3])


def _cloud(points):
    pts = np.asarray(points, dtype=np.float64)
    return MeshModel(pts, np.zeros((0, 3), dtype=np.int64), np.tile([0.0, 0.0, 1.0], (len(pts), 1)))


def test_criterion_1_physics_roundtrip(report):
    rng = np.random.default_rng(101)
    n = 100_000
    i_un, rho, phi = rng.uniform(0.1, 2.0, n), rng.uniform(0.0, 0.99, n), rng.uniform(0.0, np.pi, n)
    t0 = time.perf_counter()
    d = fit_decomposition(forward_quadruplet(i_un, rho, phi))
    secs = time.perf_counter() - t0
    dphi = np.mod(d.phi - phi, np.pi)
    err = max(np.abs(d.i_un - i_un).max(), np.abs(d.rho - rho).max(), np.minimum(dphi, np.pi - dphi).max())
    ok = err < 1e-9 and secs < 5.0
    report(1, "physics round-trip", ok, f"max error {err:.2e}, {secs:.2f}s for {n} samples")
    assert ok


def test_criterion_2_brewster_identity(report):
    errs = {eta: abs(dop_specular(np.arctan(eta), MaterialSpec(eta)) - 1.0) for eta in (1.50, 1.52, 2.75)}
    ok = max(errs.values()) <= 1e-12
    report(2, "Brewster identity", ok, ", ".join(f"eta={k}: {v:.1e}" for k, v in errs.items()))
    assert ok


def test_criterion_3_inversion_oracle(report):
    rng = np.random.default_rng(103)
    n = 10_000
    worst = {}
    for name, eta in TABLE.items():
        m = MaterialSpec.named(name)
        tb = np.arctan(eta)
        th_d, th_s1, th_s2 = rng.uniform(0, THETA_CAP, n), rng.uniform(0, tb, n), rng.uniform(tb, THETA_CAP, n)
        worst[name] = max(np.abs(invert_dop(dop_diffuse(th_d, m), m).theta_d - th_d).max(),
                          np.abs(invert_dop(dop_specular(th_s1, m), m).theta_s1 - th_s1).max(),
                          np.abs(invert_dop(dop_specular(th_s2, m), m).theta_s2 - th_s2).max())
    ok = max(worst.values()) < 1e-8
    report(3, "inversion oracle", ok, ", ".join(f"{k}: {v:.1e}" for k, v in worst.items()))
    assert ok


def _physics_at(pose, obs, mesh):
    rb = rasterize(mesh, pose, obs.K)
    valid = rb.mask & obs.mask_obs
    a = analytic_dop_from_normal(rb.normal_map, view_vectors(obs.K), obs.material, clamp_backfacing=True)
    return physics_loss(obs.rho_map, a, valid)


def test_criterion_4_physics_closure(report, tmp_path):
    save_obj(cup(), tmp_path / "cup.obj")
    meshes = [uv_sphere(0.05, 32, 64), cylinder(0.03, 0.1, 48), load_obj(tmp_path / "cup.obj")]
    names = sorted(TABLE)
    rng = np.random.default_rng(104)
    gts, above = [], 0
    for i in range(50):
        mesh, m = meshes[i % 3], MaterialSpec.named(names[(i // 3) % 3])
        sc = generate_scenes(mesh, 1, seed=4000 + i, material=m)[0]
        obs = render_scene(mesh, sc.pose, sc.intrinsics, m, sc.shading, sc.mode).observation
        gt = _physics_at(sc.pose, obs, mesh)
        axis = rng.normal(size=3)
        pert = sc.pose.perturbed(np.deg2rad(10.0) * axis / np.linalg.norm(axis), np.zeros(3))
        gts.append(gt)
        above += _physics_at(pert, obs, mesh) > gt
    ok = max(gts) < 1e-7 and above >= 0.95 * 50
    report(4, "physics-loss closure", ok, f"max GT loss {max(gts):.1e}; perturbed above GT in {above}/50")
    assert ok


def test_criterion_5_sphere_silhouette(report):
    sphere = uv_sphere(1.0, 64, 128)
    errs = []
    for z in (2.5, 3.5, 5.0, 6.5, 8.0):
        for f in (250.0, 400.0, 550.0, 700.0):
            r_px = f / np.sqrt(z**2 - 1.0)
            size = int(2 * np.ceil(r_px) + 16)
            rb = rasterize(sphere, Pose(np.eye(3), [0, 0, z]), CameraIntrinsics.centered(f, size, size))
            errs.append(abs(rb.mask.sum() / (np.pi * r_px**2) - 1.0))
    ok = len(errs) == 20 and max(errs) < 0.01
    report(5, "rasterizer silhouette", ok, f"max area error {max(errs):.3%} over {len(errs)} cases")
    assert ok


def test_criterion_6_metric_oracles(report):
    rng = np.random.default_rng(106)
    worst = 0.0
    for _ in range(100):
        mesh = _cloud(rng.normal(scale=0.05, size=(300, 3)))
        pa, pb = _random_pose(rng), _random_pose(rng)
        A = mesh.vertices @ pa.R.T + pa.t
        B = mesh.vertices @ pb.R.T + pb.t
        add_ref = sum(np.sqrt(((A[i] - B[i]) ** 2).sum()) for i in range(300)) / 300
        adds_ref = sum(np.sqrt(((B - A[i]) ** 2).sum(axis=1)).min() for i in range(300)) / 300
        worst = max(worst, abs(add_metric(pa, pb, mesh) - add_ref), abs(adds_metric(pa, pb, mesh) - adds_ref))
    cyl = cylinder(0.04, 0.12, 40)
    gt = Pose(np.eye(3), [0, 0, 0.6])
    turned = Pose(Rotation.from_rotvec([0, 0, 2 * np.pi * 3 / 40]).as_matrix(), gt.t)
    s, a = adds_metric(gt, turned, cyl), add_metric(gt, turned, cyl)
    ok = worst <= 1e-12 and s <= 1e-9 and a > 0
    report(6, "metric oracles", ok, f"max gap {worst:.1e}; cylinder ADD-S {s:.1e}, ADD {a:.2e}")
    assert ok


@pytest.mark.slow
def test_criterion_7_refinement(report):
    t0 = time.perf_counter()
    lines, ok = [], True
    for mesh in (uv_sphere(0.05, 32, 64), cup()):
        scenes = generate_scenes(mesh, 100, seed=7)
        rng = np.random.default_rng(107)
        hits, ratios, add0, add1 = 0, [], [], []
        for sc in scenes:
            obs = render_scene(mesh, sc.pose, sc.intrinsics, sc.material, sc.shading, sc.mode,
                               0.01, np.random.default_rng(sc.seed)).observation
            axis, dt = rng.normal(size=3), rng.normal(size=3)
            p0 = sc.pose.perturbed(np.deg2rad(5.0) * axis / np.linalg.norm(axis),
                                   0.05 * mesh.diameter * dt / np.linalg.norm(dt))
            res = refine_pose(p0, obs, mesh)
            err = add_metric(sc.pose, res.pose, mesh)
            hits += err < 0.1 * mesh.diameter
            ratios.append(objective_terms(res.pose, obs, mesh)[0] / objective_terms(sc.pose, obs, mesh)[0])
            add0.append(add_metric(sc.pose, p0, mesh) / mesh.diameter)
            add1.append(err / mesh.diameter)
        med = float(np.median(ratios))
        ok &= hits >= 90 and med <= 10.0
        lines.append(f"{mesh.name}: {hits}/100 below 0.1 diameter, median physics ratio {med:.2f}, "
                     f"mean ADD {np.mean(add0):.3f} -> {np.mean(add1):.3f} diameters")
    secs = time.perf_counter() - t0
    ok &= secs <= 600
    report(7, "self-supervised refinement", ok, "; ".join(lines) + f"; {secs:.0f}s")
    assert ok


def test_criterion_8_loss_oracles(report):
    rng = np.random.default_rng(108)
    worst = 0.0
    for na, nb in ((10, 500), (300, 250), (500, 500)):
        A, B = rng.normal(size=(na, 3)), rng.normal(size=(nb, 3))
        ref = (sum(min(np.sqrt(((a - b) ** 2).sum()) for b in B) for a in A) / na
               + sum(min(np.sqrt(((a - b) ** 2).sum()) for a in A) for b in B) / nb)
        worst = max(worst, abs(chamfer_loss(A, B) - ref))
    for _ in range(20):
        mesh = _cloud(rng.normal(size=(200, 3)))
        pa, pb = _random_pose(rng), _random_pose(rng)
        ref = 0.0
        for x in mesh.vertices:
            ref += np.abs((pa.R @ x + pa.t) - (pb.R @ x + pb.t)).sum()
        worst = max(worst, abs(point_matching_loss(pa, pb, mesh) - ref / 200))
    grid = np.zeros((4, 4), dtype=bool)
    a = grid.copy()
    a[:, :2] = True
    b = grid.copy()
    b[:, 2:] = True
    c = grid.copy()
    c[:, 1:3] = True
    same, disj, half = select_pseudo_labels(a, a), select_pseudo_labels(a, b), select_pseudo_labels(a, c)
    cases = ((same.delta, same.lambda1, same.source) == (0.0, 1.0, "rendered")
             and (disj.delta, disj.lambda1, disj.source) == (1.0, 0.0, "predicted")
             and half.delta == 1.0 - 4 / 12)
    ok = worst <= 1e-12 and cases
    report(8, "loss oracles", ok, f"max gap {worst:.1e}; IoU cases {'exact' if cases else 'wrong'}")
    assert ok


def test_criterion_9_selfcheck_cli(report):
    t0 = time.perf_counter()
    with tempfile.TemporaryDirectory() as tmp:
        out = subprocess.run([sys.executable, "-m", "polarforge", "--workdir", tmp, "selfcheck"],
                             capture_output=True, text=True, timeout=600)
    secs = time.perf_counter() - t0
    lines = [ln for ln in out.stdout.splitlines() if ln.startswith("[")]
    ok = out.returncode == 0 and secs < 120 and len(lines) == 7 and all(ln.startswith("[PASS]") for ln in lines)
    report(9, "selfcheck CLI", ok, f"exit {out.returncode}, {len(lines)} checks, {secs:.1f}s")
    assert ok, out.stdout + out.stderr
