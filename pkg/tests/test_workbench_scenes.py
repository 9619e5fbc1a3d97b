import numpy as np
import pytest

from polarforge.errors import InvalidInput
from polarforge.geometry import CameraIntrinsics, project
from polarforge.polarization import MaterialSpec
from polarforge.rasterizer import polarization_maps
from polarforge.workbench.scenes import SceneFile, generate_scenes, look_at, render_scene


def test_deterministic(cup_mesh):
    a = generate_scenes(cup_mesh, 20, seed=9)
    b = generate_scenes(cup_mesh, 20, seed=9)
    assert [s.to_dict() for s in a] == [s.to_dict() for s in b]
    c = generate_scenes(cup_mesh, 20, seed=10)
    assert [s.to_dict() for s in a] != [s.to_dict() for s in c]


def test_look_at_geometry(cup_mesh):
    scenes = generate_scenes(cup_mesh, 200, seed=0)
    assert len(scenes) == 200
    c = cup_mesh.centroid
    d = cup_mesh.diameter
    for s in scenes:
        cam = -s.pose.R.T @ s.pose.t
        to_obj = (c - cam) / np.linalg.norm(c - cam)
        z_axis = s.pose.R[2]
        assert np.arccos(np.clip(z_axis @ to_obj, -1, 1)) < 1e-6
        assert cam[2] - c[2] >= -1e-12
        assert 3.5 * d - 1e-9 <= np.linalg.norm(cam - c) <= 5.0 * d + 1e-9
        u, v = project(s.pose.R @ c + s.pose.t, s.intrinsics)
        assert abs(u - s.intrinsics.cx) < 1e-6 and abs(v - s.intrinsics.cy) < 1e-6


def test_hemisphere_uniform_in_solid_angle(sphere_mesh):
    scenes = generate_scenes(sphere_mesh, 4000, seed=1)
    c = sphere_mesh.centroid
    dirs = np.array([-s.pose.R.T @ s.pose.t - c for s in scenes])
    cos_el = dirs[:, 2] / np.linalg.norm(dirs, axis=1)
    # cos of the polar angle is uniform on [0, 1]: mean 1/2, variance 1/12
    assert abs(cos_el.mean() - 0.5) < 0.02
    assert abs(cos_el.var() - 1 / 12) < 0.01


def test_roll_jitter_bounded(sphere_mesh):
    for s in generate_scenes(sphere_mesh, 100, seed=2):
        cam = -s.pose.R.T @ s.pose.t
        R0 = look_at(cam, sphere_mesh.centroid)
        roll = s.pose.R @ R0.T
        assert abs(np.arctan2(roll[1, 0], roll[0, 0])) <= np.deg2rad(15.0) + 1e-12


def test_scene_file_roundtrip(tmp_path, cup_mesh):
    s = generate_scenes(cup_mesh, 1, seed=0, material=MaterialSpec.named("stainless steel"))[0]
    s.save(tmp_path / "s.json")
    t = SceneFile.load(tmp_path / "s.json")
    assert t.to_dict() == s.to_dict()
    assert t.mode == "specular"


def test_scene_file_missing_mesh(tmp_path, cup_mesh):
    s = generate_scenes(cup_mesh, 1, seed=0, mesh_path="absent.obj")[0]
    with pytest.raises(InvalidInput):
        s.resolve_mesh(tmp_path)


def test_scene_file_bad_material(tmp_path, cup_mesh):
    d = generate_scenes(cup_mesh, 1, seed=0)[0].to_dict()
    d["material"] = {"name": "glass", "eta": 1.6}
    with pytest.raises(InvalidInput):
        SceneFile.from_dict(d)


def test_n_must_be_positive(cup_mesh):
    with pytest.raises(InvalidInput):
        generate_scenes(cup_mesh, 0, seed=0)


def test_render_scene_noise_free_matches_maps(cup_mesh):
    s = generate_scenes(cup_mesh, 1, seed=4)[0]
    r = render_scene(cup_mesh, s.pose, s.intrinsics, s.material, s.shading, s.mode)
    gt = polarization_maps(r.buffers, s.intrinsics, s.material, s.shading, s.mode)
    assert np.abs(r.observation.rho_map - gt.rho).max() < 1e-9
    assert np.array_equal(r.observation.mask_obs, r.buffers.mask)


def test_render_scene_noise_is_seeded(cup_mesh):
    s = generate_scenes(cup_mesh, 1, seed=4)[0]
    a = render_scene(cup_mesh, s.pose, s.intrinsics, s.material, s.shading, s.mode, 0.01,
                     np.random.default_rng(1))
    b = render_scene(cup_mesh, s.pose, s.intrinsics, s.material, s.shading, s.mode, 0.01,
                     np.random.default_rng(1))
    assert np.array_equal(a.quadruplet.images, b.quadruplet.images)
    assert a.quadruplet.images.min() >= 0.0


def test_custom_intrinsics(cup_mesh):
    K = CameraIntrinsics.centered(320.0, 160, 120)
    s = generate_scenes(cup_mesh, 3, seed=0, intrinsics=K)
    assert all(x.intrinsics == K for x in s)
