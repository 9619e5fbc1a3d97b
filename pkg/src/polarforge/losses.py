"""Self-supervision loss terms and the pseudo-label selection policy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import BothEmpty, EmptyMask, EmptySet, ShapeMismatch
from .geometry import MeshModel, Pose, transform_points
from .polarization import AnalyticDoP

DEFAULT_DISCREPANCY_THRESHOLD = 0.3
BRUTE_FORCE_LIMIT = 500


def _same_shape(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    return a, b


def point_matching_loss(p_a: Pose, p_b: Pose, mesh: MeshModel) -> float:
    """Mean L1 distance between the model points placed by two poses."""
    diff = transform_points(p_a, mesh.vertices) - transform_points(p_b, mesh.vertices)
    return float(np.abs(diff).sum(axis=1).mean())


def mask_loss(m_a, m_b) -> float:
    a, b = _same_shape(m_a, m_b)
    return float(np.mean((a - b) ** 2))


def normal_loss(n_a, n_b, valid) -> float:
    """Mean cosine distance ``1 - n_a . n_b`` over valid pixels."""
    a, b = _same_shape(n_a, n_b)
    valid = np.asarray(valid, dtype=bool)
    if valid.shape != a.shape[:-1]:
        raise ShapeMismatch("validity mask does not match the normal maps")
    if not valid.any():
        raise EmptyMask("no valid pixel for the normal loss")
    dots = np.einsum("...i,...i->...", a[valid], b[valid])
    return float(np.mean(1.0 - dots))


@dataclass(frozen=True)
class PseudoLabelPolicy:
    """Which geometric pseudo label to trust, and the pose-loss weight."""

    r: float
    delta: float
    lambda1: float
    source: str

    def __post_init__(self):
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError("delta must lie in [0, 1]")
        if self.lambda1 != 1.0 - self.delta:
            raise ValueError("lambda1 must equal 1 - delta")
        if self.source != ("rendered" if self.delta <= self.r else "predicted"):
            raise ValueError("source inconsistent with delta and r")


def mask_iou(m_a, m_b) -> float:
    a, b = _same_shape(m_a, m_b)
    a, b = a > 0.5, b > 0.5
    union = np.count_nonzero(a | b)
    if union == 0:
        raise BothEmpty("both masks are empty")
    return np.count_nonzero(a & b) / union


def select_pseudo_labels(m_pred, m_rend, r: float = DEFAULT_DISCREPANCY_THRESHOLD) -> PseudoLabelPolicy:
    """Pick rendered or predicted geometry as pseudo ground truth.

    The discrepancy is ``1 - IoU`` of the two masks. Raises ``BothEmpty``
    when neither mask covers a pixel (discrepancy taken as 1).
    """
    delta = 1.0 - mask_iou(m_pred, m_rend)
    return PseudoLabelPolicy(r, delta, 1.0 - delta, "rendered" if delta <= r else "predicted")


def physics_loss(rho_obs, a: AnalyticDoP, valid) -> float:
    """Mean over valid pixels of the smaller of the diffuse/specular DoP residuals."""
    rho = np.asarray(rho_obs, dtype=np.float64)
    rd, _ = _same_shape(a.rho_d_hat, rho)
    rs, _ = _same_shape(a.rho_s_hat, rho)
    valid = np.asarray(valid, dtype=bool)
    if valid.shape != rho.shape:
        raise ShapeMismatch("validity mask does not match the DoP map")
    if not valid.any():
        raise EmptyMask("no valid pixel for the physics loss")
    r = rho[valid]
    return float(np.mean(np.minimum(np.abs(r - rd[valid]), np.abs(r - rs[valid]))))


def _nn_distances(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    if len(src) * len(dst) <= BRUTE_FORCE_LIMIT**2:
        d = np.linalg.norm(src[:, None, :] - dst[None, :, :], axis=-1)
        return d.min(axis=1)
    return cKDTree(dst).query(src, k=1)[0]


def chamfer_loss(pc_a, pc_b) -> float:
    """Symmetric chamfer distance with unsquared Euclidean nearest-neighbour terms."""
    a = np.asarray(pc_a, dtype=np.float64).reshape(-1, 3)
    b = np.asarray(pc_b, dtype=np.float64).reshape(-1, 3)
    if len(a) == 0 or len(b) == 0:
        raise EmptySet("chamfer distance needs two non-empty point sets")
    return float(_nn_distances(a, b).mean() + _nn_distances(b, a).mean())


@dataclass(frozen=True)
class LossToggles:
    pose: bool = True
    mask: bool = True
    normals: bool = True
    physics: bool = True
    chamfer: bool = False


@dataclass(frozen=True)
class LossReport:
    pose: float
    mask: float
    normals: float
    physics: float
    chamfer: float
    pseudo: float
    total: float


def total_loss(components: dict, policy: PseudoLabelPolicy,
               toggles: LossToggles = LossToggles()) -> LossReport:
    """Combine loss terms; disabled terms are reported as zero.

    ``pseudo = lambda1 * pose + mask + normals`` and
    ``total = pseudo + physics + chamfer``.
    """
    vals = {}
    for key in ("pose", "mask", "normals", "physics", "chamfer"):
        v = float(components.get(key, 0.0)) if getattr(toggles, key) else 0.0
        if not np.isfinite(v) or v < 0:
            raise ValueError(f"loss component {key} must be finite and non-negative, got {v}")
        vals[key] = v
    pseudo = policy.lambda1 * vals["pose"] + vals["mask"] + vals["normals"]
    return LossReport(**vals, pseudo=pseudo, total=pseudo + vals["physics"] + vals["chamfer"])
