"""Pose representations, camera model and rigid point transforms.

Conventions used throughout the package:

* Camera frame follows OpenCV: x right, y down, z forward.
* Pixel centers sit at integer coordinates + 0.5, so pixel ``(row, col)``
  covers the continuous image point ``(col + 0.5, row + 0.5)``.
* Angles are radians.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import DegenerateInput, InvalidInput, OutOfBounds

CANONICAL_CROP_SIZE = 256.0
_ORTHO_TOL = 1e-9


def _as_vec3(x, name="vector") -> np.ndarray:
    v = np.asarray(x, dtype=np.float64).reshape(-1)
    if v.shape != (3,):
        raise InvalidInput(f"{name} must have 3 components, got shape {np.shape(x)}")
    return v


def is_rotation_matrix(R, tol: float = _ORTHO_TOL) -> bool:
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        return False
    return bool(np.abs(R.T @ R - np.eye(3)).max() <= tol and abs(np.linalg.det(R) - 1.0) <= tol)


def axis_angle_to_matrix(rotvec) -> np.ndarray:
    """Rotation matrix for a rotation vector (axis scaled by angle in radians)."""
    return Rotation.from_rotvec(_as_vec3(rotvec, "rotvec")).as_matrix()


def matrix_to_axis_angle(R) -> np.ndarray:
    return Rotation.from_matrix(np.asarray(R, dtype=np.float64)).as_rotvec()


def rotation_angle(R_a, R_b) -> float:
    """Geodesic angle between two rotation matrices."""
    cos = (np.trace(np.asarray(R_a).T @ np.asarray(R_b)) - 1.0) / 2.0
    return float(np.arccos(np.clip(cos, -1.0, 1.0)))


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform ``x -> R @ x + t`` from object frame to camera frame (meters)."""

    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        R = np.array(self.R, dtype=np.float64)
        t = _as_vec3(self.t, "translation").copy()
        if not is_rotation_matrix(R):
            raise InvalidInput("rotation is not orthonormal with det +1")
        if not np.all(np.isfinite(t)):
            raise InvalidInput("translation must be finite")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls) -> Pose:
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, T) -> Pose:
        T = np.asarray(T, dtype=np.float64)
        return cls(T[:3, :3], T[:3, 3])

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.R
        T[:3, 3] = self.t
        return T

    def compose(self, other: Pose) -> Pose:
        """``self ∘ other``: apply ``other`` first."""
        return Pose(self.R @ other.R, self.R @ other.t + self.t)

    def inverse(self) -> Pose:
        return Pose(self.R.T, -self.R.T @ self.t)

    def perturbed(self, rotvec, dt) -> Pose:
        """Left-multiply the rotation by ``exp(rotvec)`` and shift the translation by ``dt``."""
        return Pose(axis_angle_to_matrix(rotvec) @ self.R, self.t + _as_vec3(dt, "dt"))

    def to_dict(self) -> dict:
        return {"R": self.R.tolist(), "t": self.t.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> Pose:
        try:
            return cls(np.asarray(d["R"], dtype=np.float64), np.asarray(d["t"], dtype=np.float64))
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidInput(f"malformed pose record: {exc}") from exc

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return bool(np.array_equal(self.R, other.R) and np.array_equal(self.t, other.t))

    def __repr__(self):
        rv = matrix_to_axis_angle(self.R)
        return f"Pose(rotvec={np.round(rv, 6).tolist()}, t={np.round(self.t, 6).tolist()})"


def save_pose(pose: Pose, path) -> None:
    Path(path).write_text(json.dumps(pose.to_dict(), indent=2))


def load_pose(path) -> Pose:
    try:
        return Pose.from_dict(json.loads(Path(path).read_text()))
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"{path}: not valid JSON ({exc})") from exc


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixels, without distortion."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidInput("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InvalidInput("principal point must lie inside the image")

    @classmethod
    def centered(cls, focal: float, width: int = 256, height: int = 256) -> CameraIntrinsics:
        return cls(float(focal), float(focal), width / 2.0, height / 2.0, int(width), int(height))

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def to_dict(self) -> dict:
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "width": self.width, "height": self.height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> CameraIntrinsics:
        try:
            return cls(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]),
                       int(d["width"]), int(d["height"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidInput(f"malformed intrinsics record: {exc}") from exc


def project(points, K: CameraIntrinsics) -> np.ndarray:
    """Project camera-frame points (..., 3) to continuous pixel coordinates (..., 2)."""
    p = np.asarray(points, dtype=np.float64)
    z = p[..., 2]
    return np.stack([K.fx * p[..., 0] / z + K.cx, K.fy * p[..., 1] / z + K.cy], axis=-1)


def backproject(u: float, v: float, K: CameraIntrinsics) -> np.ndarray:
    """Unit viewing ray in the camera frame through the continuous pixel point ``(u, v)``."""
    if not (0.0 <= u <= K.width and 0.0 <= v <= K.height):
        raise OutOfBounds(f"pixel ({u}, {v}) outside {K.width}x{K.height} image")
    d = np.array([(u - K.cx) / K.fx, (v - K.cy) / K.fy, 1.0])
    return d / np.linalg.norm(d)


def pixel_rays(K: CameraIntrinsics) -> np.ndarray:
    """Unit rays through every pixel center, shape (H, W, 3)."""
    u = np.arange(K.width, dtype=np.float64) + 0.5
    v = np.arange(K.height, dtype=np.float64) + 0.5
    uu, vv = np.meshgrid(u, v)
    d = np.stack([(uu - K.cx) / K.fx, (vv - K.cy) / K.fy, np.ones_like(uu)], axis=-1)
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


def transform_points(pose: Pose, pts) -> np.ndarray:
    pts = np.asarray(pts, dtype=np.float64)
    return pts @ pose.R.T + pose.t


# --- rotation parameterisations ---------------------------------------------

def rot6d_to_matrix(r6) -> np.ndarray:
    """Continuous 6D rotation representation to a rotation matrix.

    ``r6`` holds two 3-vectors (``a``, ``b``). The first column is ``a``
    normalised, the second is ``b`` with its ``a`` component removed and then
    normalised, the third is their cross product.
    """
    r6 = np.asarray(r6, dtype=np.float64).reshape(2, 3)
    a, b = r6[0], r6[1]
    na = np.linalg.norm(a)
    if na == 0.0:
        raise DegenerateInput("first 6D vector is zero")
    c1 = a / na
    b_perp = b - (c1 @ b) * c1
    nb = np.linalg.norm(b_perp)
    if nb <= 1e-12 * max(np.linalg.norm(b), 1e-300):
        raise DegenerateInput("6D rotation vectors are parallel")
    c2 = b_perp / nb
    c3 = np.cross(c1, c2)
    return np.stack([c1, c2, c3], axis=1)


def matrix_to_rot6d(R) -> np.ndarray:
    R = np.asarray(R, dtype=np.float64)
    return np.stack([R[:, 0], R[:, 1]])


def _viewing_correction(t) -> np.ndarray:
    """Rotation taking the optical axis onto the ray towards ``t``."""
    t = _as_vec3(t, "translation")
    n = np.linalg.norm(t)
    if n == 0.0:
        raise DegenerateInput("translation is zero; the viewing ray is undefined")
    ray = t / n
    axis = np.cross([0.0, 0.0, 1.0], ray)
    s = np.linalg.norm(axis)
    angle = np.arctan2(s, ray[2])
    if s < 1e-15:
        if ray[2] > 0:
            return np.eye(3)
        return axis_angle_to_matrix([np.pi, 0.0, 0.0])
    return axis_angle_to_matrix(axis / s * angle)


def allocentric_to_egocentric(R_alloc, t) -> np.ndarray:
    """Egocentric rotation for an allocentric rotation of an object at ``t``."""
    return _viewing_correction(t) @ np.asarray(R_alloc, dtype=np.float64)


def egocentric_to_allocentric(R_ego, t) -> np.ndarray:
    return _viewing_correction(t).T @ np.asarray(R_ego, dtype=np.float64)


# --- scale-invariant translation --------------------------------------------

@dataclass(frozen=True)
class SiteTranslation:
    """Translation relative to a detection crop.

    ``dx, dy`` are offsets of the projected object center from the crop
    center in units of crop width / height. ``dz`` is depth divided by the
    zoom ratio ``crop_size / 256``.
    """

    dx: float
    dy: float
    dz: float

    def __post_init__(self):
        if not all(np.isfinite([self.dx, self.dy, self.dz])) or self.dz <= 0:
            raise InvalidInput("site translation must be finite with dz > 0")

    def as_array(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.dz])


def _crop_geometry(crop):
    x0, y0, x1, y1 = (float(c) for c in crop)
    w, h = x1 - x0, y1 - y0
    if not (w > 0 and h > 0):
        raise DegenerateInput(f"crop {crop} has zero area")
    return (x0 + x1) / 2.0, (y0 + y1) / 2.0, w, h, max(w, h) / CANONICAL_CROP_SIZE


def site_to_translation(s: SiteTranslation, crop, K: CameraIntrinsics) -> np.ndarray:
    """Recover a metric translation from a crop-relative encoding.

    ``crop`` is ``(x_min, y_min, x_max, y_max)`` in pixels.
    """
    ccx, ccy, w, h, zoom = _crop_geometry(crop)
    u = ccx + s.dx * w
    v = ccy + s.dy * h
    z = s.dz * zoom
    return np.array([(u - K.cx) / K.fx * z, (v - K.cy) / K.fy * z, z])


def translation_to_site(t, crop, K: CameraIntrinsics) -> SiteTranslation:
    t = _as_vec3(t, "translation")
    if t[2] <= 0:
        raise DegenerateInput("object must be in front of the camera")
    ccx, ccy, w, h, zoom = _crop_geometry(crop)
    u, v = project(t, K)
    return SiteTranslation((u - ccx) / w, (v - ccy) / h, t[2] / zoom)


# --- meshes ------------------------------------------------------------------

def _max_pairwise_distance(points: np.ndarray) -> float:
    pts = points
    if len(points) > 64:
        from scipy.spatial import ConvexHull, QhullError
        try:
            pts = points[ConvexHull(points).vertices]
        except (QhullError, ValueError):
            pts = points
    best = 0.0
    for i in range(0, len(pts), 512):
        d = np.linalg.norm(pts[i:i + 512, None, :] - pts[None, :, :], axis=-1)
        best = max(best, float(d.max()))
    return best


@dataclass(frozen=True, eq=False)
class MeshModel:
    """Triangle mesh in the object frame (meters) with unit vertex normals."""

    vertices: np.ndarray
    triangles: np.ndarray
    normals: np.ndarray
    diameter: float = field(default=-1.0)
    name: str = "mesh"

    def __post_init__(self):
        V = np.ascontiguousarray(self.vertices, dtype=np.float64)
        F = np.ascontiguousarray(self.triangles, dtype=np.int64)
        N = np.ascontiguousarray(self.normals, dtype=np.float64)
        if V.ndim != 2 or V.shape[1] != 3 or len(V) == 0:
            raise InvalidInput("vertices must be a non-empty (N, 3) array")
        if F.ndim != 2 or F.shape[1] != 3:
            raise InvalidInput("triangles must be an (M, 3) array")
        if F.size and (F.min() < 0 or F.max() >= len(V)):
            raise InvalidInput("triangle index out of range")
        if N.shape != V.shape:
            raise InvalidInput("need exactly one normal per vertex")
        if np.abs(np.linalg.norm(N, axis=1) - 1.0).max() > 1e-6:
            raise InvalidInput("vertex normals must be unit length")
        diameter = float(self.diameter)
        if diameter < 0:
            diameter = _max_pairwise_distance(V)
        if not diameter > 0:
            raise InvalidInput("mesh diameter must be positive")
        for a in (V, F, N):
            a.setflags(write=False)
        object.__setattr__(self, "vertices", V)
        object.__setattr__(self, "triangles", F)
        object.__setattr__(self, "normals", N)
        object.__setattr__(self, "diameter", diameter)

    @property
    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)

    def face_normals(self) -> np.ndarray:
        v = self.vertices[self.triangles]
        n = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
        return n / np.maximum(np.linalg.norm(n, axis=1, keepdims=True), 1e-300)


def vertex_normals_from_faces(vertices, triangles) -> np.ndarray:
    """Area-weighted vertex normals."""
    V = np.asarray(vertices, dtype=np.float64)
    F = np.asarray(triangles, dtype=np.int64)
    fn = np.cross(V[F[:, 1]] - V[F[:, 0]], V[F[:, 2]] - V[F[:, 0]])
    vn = np.zeros_like(V)
    for k in range(3):
        np.add.at(vn, F[:, k], fn)
    norm = np.linalg.norm(vn, axis=1, keepdims=True)
    vn = np.where(norm > 0, vn / np.where(norm > 0, norm, 1.0), [0.0, 0.0, 1.0])
    return vn


def load_obj(path, name: str | None = None) -> MeshModel:
    """Read an ASCII OBJ file (``v``, ``vn`` and ``f`` records).

    Polygons are fan-triangulated. A vertex referenced with different
    normals is split so that every output vertex carries a single normal.
    Missing normals are computed from face areas.
    """
    path = Path(path)
    positions, normals, faces = [], [], []
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise InvalidInput(f"cannot read mesh {path}: {exc}") from exc
    for lineno, line in enumerate(lines, 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        try:
            if parts[0] == "v":
                positions.append([float(x) for x in parts[1:4]])
            elif parts[0] == "vn":
                normals.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                corners = []
                for tok in parts[1:]:
                    fields = tok.split("/")
                    vi = int(fields[0])
                    vi = vi - 1 if vi > 0 else len(positions) + vi
                    ni = -1
                    if len(fields) >= 3 and fields[2]:
                        ni = int(fields[2])
                        ni = ni - 1 if ni > 0 else len(normals) + ni
                    corners.append((vi, ni))
                for k in range(1, len(corners) - 1):
                    faces.append((corners[0], corners[k], corners[k + 1]))
        except (ValueError, IndexError) as exc:
            raise InvalidInput(f"{path}:{lineno}: malformed record {line!r}") from exc
    if not positions or not faces:
        raise InvalidInput(f"{path}: no geometry")
    P = np.asarray(positions, dtype=np.float64)
    Nn = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
    for f in faces:
        for vi, ni in f:
            if not 0 <= vi < len(P) or ni >= len(Nn):
                raise InvalidInput(f"{path}: face references a missing vertex or normal")

    have_normals = all(ni >= 0 for f in faces for _, ni in f)
    if not have_normals:
        tris = np.array([[vi for vi, _ in f] for f in faces], dtype=np.int64)
        return MeshModel(P, tris, vertex_normals_from_faces(P, tris), name=name or path.stem)

    index: dict[tuple[int, int], int] = {}
    out_v, out_n, tris = [], [], []
    for f in faces:
        tri = []
        for key in f:
            if key not in index:
                index[key] = len(out_v)
                out_v.append(P[key[0]])
                n = Nn[key[1]]
                out_n.append(n / np.linalg.norm(n))
            tri.append(index[key])
        tris.append(tri)
    return MeshModel(np.array(out_v), np.array(tris, dtype=np.int64), np.array(out_n),
                     name=name or path.stem)


def save_obj(mesh: MeshModel, path) -> None:
    lines = [f"# {mesh.name}"]
    lines += [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.vertices]
    lines += [f"vn {x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.normals]
    lines += [f"f {a + 1}//{a + 1} {b + 1}//{b + 1} {c + 1}//{c + 1}" for a, b, c in mesh.triangles]
    Path(path).write_text("\n".join(lines) + "\n")
