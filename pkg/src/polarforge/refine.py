"""Pose refinement against observed degree-of-polarization maps.

The objective renders the mesh at a candidate pose, predicts the diffuse
and specular DoP from the rendered normals and compares them with the
observed DoP (pixel-wise minimum), plus a silhouette term. Minimisation is
derivative-free: central finite differences over six pose increments and
gradient descent with a backtracking line search.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InvalidInput, NoOverlap, ShapeMismatch
from .geometry import CameraIntrinsics, MeshModel, Pose, axis_angle_to_matrix, transform_points
from .losses import mask_loss, physics_loss
from .polarization import MaterialSpec, analytic_dop_from_normal
from .rasterizer import NEAR_PLANE, rasterize, view_vectors

SENTINEL = 1e6


@dataclass(frozen=True, eq=False)
class Observation:
    """Observed polarimetric evidence for one object in one image."""

    rho_map: np.ndarray
    aop_map: np.ndarray
    mask_obs: np.ndarray
    K: CameraIntrinsics
    material: MaterialSpec
    view: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        rho = np.asarray(self.rho_map, dtype=np.float64)
        aop = np.asarray(self.aop_map, dtype=np.float64)
        mask = np.asarray(self.mask_obs, dtype=bool)
        if not (rho.shape == aop.shape == mask.shape == self.K.shape):
            raise ShapeMismatch("observation maps must share the camera image size")
        if np.any(rho < 0) or np.any(rho > 1) or np.any(aop < 0) or np.any(aop >= np.pi):
            raise InvalidInput("DoP must lie in [0, 1] and AoP in [0, pi)")
        object.__setattr__(self, "rho_map", rho)
        object.__setattr__(self, "aop_map", aop)
        object.__setattr__(self, "mask_obs", mask)
        object.__setattr__(self, "view", view_vectors(self.K))


@dataclass(frozen=True)
class ObjectiveWeights:
    physics: float = 1.0
    mask: float = 10.0


@dataclass(frozen=True)
class RefineConfig:
    """Finite-difference gradient descent settings.

    Steps are taken in scaled parameters: radians for the rotation
    increment and ``translation / length_scale`` for the translation
    increment (``length_scale`` defaults to the mesh diameter).
    ``initial_step`` is the first trial step length; it is multiplied by
    ``step_growth`` after an accepted step and halved after a rejected one.
    """

    max_iters: int = 40
    fd_step_rot: float = 1e-3
    fd_step_trans: float = 1e-4
    initial_step: float = 0.02
    step_growth: float = 1.5
    max_halvings: int = 20
    tol: float = 1e-9
    w_physics: float = 1.0
    w_mask: float = 10.0
    length_scale: float | None = None

    def __post_init__(self):
        positive = ("fd_step_rot", "fd_step_trans", "initial_step", "tol")
        if self.max_iters < 0 or self.max_halvings < 0 or any(getattr(self, k) <= 0 for k in positive):
            raise InvalidInput("refinement steps and tolerances must be positive")
        if self.step_growth < 1.0:
            raise InvalidInput("step_growth must be >= 1")

    @property
    def weights(self) -> ObjectiveWeights:
        return ObjectiveWeights(self.w_physics, self.w_mask)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> RefineConfig:
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise InvalidInput(f"unknown refine config keys: {sorted(unknown)}")
        return cls(**d)


def objective_terms(p: Pose, obs: Observation, mesh: MeshModel) -> tuple[float, float] | None:
    """``(physics, mask)`` loss at pose ``p``, or None when the render misses the observation."""
    rb = rasterize(mesh, p, obs.K)
    valid = rb.mask & obs.mask_obs
    if not valid.any():
        return None
    a = analytic_dop_from_normal(rb.normal_map[valid], obs.view[valid], obs.material,
                                 clamp_backfacing=True)
    phys = physics_loss(obs.rho_map[valid], a, np.ones(a.rho_d_hat.shape, dtype=bool))
    return phys, mask_loss(rb.mask, obs.mask_obs)


def objective(p: Pose, obs: Observation, mesh: MeshModel,
              weights: ObjectiveWeights = ObjectiveWeights()) -> float:
    terms = objective_terms(p, obs, mesh)
    if terms is None:
        return SENTINEL
    return weights.physics * terms[0] + weights.mask * terms[1]


def _apply(p: Pose, x: np.ndarray) -> Pose:
    return Pose(axis_angle_to_matrix(x[:3]) @ p.R, p.t + x[3:])


def _in_front(p: Pose, mesh: MeshModel) -> bool:
    return p.t[2] > 0 and transform_points(p, mesh.vertices)[:, 2].min() > NEAR_PLANE


@dataclass
class RefineResult:
    pose: Pose
    trace: list[float]
    iterations: int
    evaluations: int


def refine_pose(p0: Pose, obs: Observation, mesh: MeshModel,
                cfg: RefineConfig = RefineConfig()) -> RefineResult:
    """Locally minimise ``objective`` starting from ``p0``.

    The returned trace holds the objective at ``p0`` followed by the value
    after every accepted step, so it is strictly decreasing.
    """
    w = cfg.weights
    n_eval = 0

    def f(p):
        nonlocal n_eval
        n_eval += 1
        return objective(p, obs, mesh, w)

    f0 = f(p0)
    if f0 >= SENTINEL:
        raise NoOverlap("initial pose does not overlap the observed mask")
    scale = np.array([1.0, 1.0, 1.0] + [cfg.length_scale or mesh.diameter] * 3)
    h = np.array([cfg.fd_step_rot] * 3 + [cfg.fd_step_trans] * 3)

    pose, trace, step = p0, [f0], cfg.initial_step
    it = 0
    for it in range(1, cfg.max_iters + 1):
        grad = np.zeros(6)
        for i in range(6):
            e = np.zeros(6)
            e[i] = h[i]
            grad[i] = (f(_apply(pose, e)) - f(_apply(pose, -e))) / (2 * h[i])
        g_scaled = grad * scale
        gn = np.linalg.norm(g_scaled)
        if not np.isfinite(gn) or gn == 0.0:
            break
        direction = -g_scaled / gn
        accepted = False
        for _ in range(cfg.max_halvings + 1):
            cand = _apply(pose, step * direction * scale)
            if _in_front(cand, mesh):
                fc = f(cand)
                if fc < trace[-1]:
                    accepted = True
                    break
            step *= 0.5
        if not accepted:
            break
        gain = trace[-1] - fc
        pose = cand
        trace.append(fc)
        step *= cfg.step_growth
        if gain < cfg.tol:
            break
    return RefineResult(pose, trace, it, n_eval)
