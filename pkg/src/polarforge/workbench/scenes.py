"""Synthetic scene configuration and viewpoint sampling."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import InvalidInput
from ..geometry import CameraIntrinsics, MeshModel, Pose, load_obj
from ..polarization import MaterialSpec, fit_decomposition
from ..rasterizer import PolarQuadruplet, RenderBuffers, ShadingSpec, rasterize, render_polarization
from ..refine import Observation

DEFAULT_FOCAL = 500.0
DEFAULT_SIZE = 256
MODE_POLICIES = ("material", "diffuse", "specular")


@dataclass(frozen=True)
class SceneFile:
    """Everything needed to render one synthetic polarimetric view."""

    mesh_path: str
    pose: Pose
    intrinsics: CameraIntrinsics
    material: MaterialSpec
    shading: ShadingSpec
    mode_map: str = "material"
    seed: int = 0

    def __post_init__(self):
        if self.mode_map not in MODE_POLICIES:
            raise InvalidInput(f"mode_map must be one of {MODE_POLICIES}")

    @property
    def mode(self) -> str:
        return self.material.default_mode if self.mode_map == "material" else self.mode_map

    def to_dict(self) -> dict:
        return {
            "mesh": self.mesh_path,
            "pose": self.pose.to_dict(),
            "intrinsics": self.intrinsics.to_dict(),
            "material": {"name": self.material.name, "eta": self.material.eta},
            "shading": self.shading.to_dict(),
            "mode_map": self.mode_map,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> SceneFile:
        try:
            mat = d["material"]
            return cls(str(d["mesh"]), Pose.from_dict(d["pose"]),
                       CameraIntrinsics.from_dict(d["intrinsics"]),
                       MaterialSpec(float(mat["eta"]), str(mat.get("name", "custom"))),
                       ShadingSpec.from_dict(d.get("shading", {})),
                       str(d.get("mode_map", "material")), int(d.get("seed", 0)))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InvalidInput):
                raise
            raise InvalidInput(f"malformed scene: {exc}") from exc

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> SceneFile:
        path = Path(path)
        try:
            scene = cls.from_dict(json.loads(path.read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidInput(f"cannot read scene {path}: {exc}") from exc
        return scene

    def resolve_mesh(self, base_dir=".") -> Path:
        p = Path(self.mesh_path)
        if not p.is_absolute():
            p = Path(base_dir) / p
        if not p.is_file():
            raise InvalidInput(f"mesh file {p} does not exist")
        return p

    def load_mesh(self, base_dir=".") -> MeshModel:
        return load_obj(self.resolve_mesh(base_dir))


def look_at(camera_position, target, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """World-to-camera rotation for an OpenCV camera at ``camera_position`` facing ``target``."""
    forward = np.asarray(target, dtype=np.float64) - np.asarray(camera_position, dtype=np.float64)
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, up)
    if np.linalg.norm(right) < 1e-9:
        right = np.cross(forward, (0.0, 1.0, 0.0))
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    return np.stack([right, down, forward])


def sample_upper_hemisphere(rng: np.random.Generator, n: int) -> np.ndarray:
    """Directions uniform in solid angle over ``z >= 0``."""
    z = rng.uniform(0.0, 1.0, n)
    az = rng.uniform(0.0, 2 * np.pi, n)
    s = np.sqrt(1.0 - z**2)
    return np.stack([s * np.cos(az), s * np.sin(az), z], axis=1)


def generate_scenes(mesh: MeshModel, n: int, seed: int, *, mesh_path: str = "mesh.obj",
                    intrinsics: CameraIntrinsics | None = None,
                    material: MaterialSpec | None = None,
                    radius_range: tuple[float, float] | None = None,
                    roll_jitter: float = np.deg2rad(15.0),
                    mode_map: str = "material") -> list[SceneFile]:
    """Sample ``n`` views with the camera on the object's upper hemisphere.

    Each camera looks at the mesh centroid; a random roll about the viewing
    axis in ``[-roll_jitter, roll_jitter]`` varies the in-plane orientation.
    Camera distance is uniform in ``radius_range`` (default 3.5 to 5
    diameters). Light directions are drawn on the camera side.
    """
    if n < 1:
        raise InvalidInput("need at least one scene")
    K = intrinsics or CameraIntrinsics.centered(DEFAULT_FOCAL, DEFAULT_SIZE, DEFAULT_SIZE)
    material = material or MaterialSpec.named("plastics")
    r_lo, r_hi = radius_range or (3.5 * mesh.diameter, 5.0 * mesh.diameter)
    rng = np.random.default_rng(seed)
    dirs = sample_upper_hemisphere(rng, n)
    radii = rng.uniform(r_lo, r_hi, n)
    rolls = rng.uniform(-roll_jitter, roll_jitter, n)
    lights = np.stack([rng.uniform(-0.6, 0.6, n), rng.uniform(-0.6, 0.6, n), -np.ones(n)], axis=1)
    scene_seeds = rng.integers(0, 2**31 - 1, n)
    c = mesh.centroid
    scenes = []
    for i in range(n):
        cam = c + radii[i] * dirs[i]
        R = look_at(cam, c)
        cr, sr = np.cos(rolls[i]), np.sin(rolls[i])
        roll = np.array([[cr, -sr, 0.0], [sr, cr, 0.0], [0.0, 0.0, 1.0]])
        R = roll @ R
        pose = Pose(R, -R @ cam)
        light = lights[i] / np.linalg.norm(lights[i])
        scenes.append(SceneFile(mesh_path, pose, K, material,
                                ShadingSpec(tuple(light)), mode_map, int(scene_seeds[i])))
    return scenes


@dataclass(frozen=True, eq=False)
class RenderedScene:
    buffers: RenderBuffers
    quadruplet: PolarQuadruplet
    observation: Observation


def render_scene(mesh: MeshModel, pose: Pose, K: CameraIntrinsics, material: MaterialSpec,
                 shading: ShadingSpec = ShadingSpec(), mode=None, noise_sigma: float = 0.0,
                 rng: np.random.Generator | None = None) -> RenderedScene:
    """Render a view and derive the observation a polarization camera would give.

    With ``noise_sigma > 0`` Gaussian noise is added to each polarizer
    image (clipped at zero) before the decomposition is fitted.
    """
    rb = rasterize(mesh, pose, K)
    quad = render_polarization(rb, K, material, shading, mode)
    images = quad.images
    if noise_sigma > 0:
        rng = rng or np.random.default_rng(0)
        images = np.maximum(images + rng.normal(0.0, noise_sigma, images.shape), 0.0)
        quad = PolarQuadruplet(images, quad.angles)
    d = fit_decomposition(images, quad.angles)
    obs = Observation(d.rho, d.phi, rb.mask, K, material)
    return RenderedScene(rb, quad, obs)
