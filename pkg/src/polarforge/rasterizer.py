"""Z-buffered software rasterizer and synthetic polarimetric rendering.

Triangles are processed in index order; a pixel is overwritten only by a
strictly closer fragment, so depth ties go to the lower triangle index.
Coverage uses a top-left fill rule on pixel centers, which makes shared
edges belong to exactly one triangle. Back-facing triangles (geometric
normal pointing away from the camera) and triangles with a vertex closer
than ``NEAR_PLANE`` are dropped.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from .geometry import CameraIntrinsics, MeshModel, Pose, pixel_rays, transform_points
from .polarization import (
    FILTER_ANGLES,
    THETA_CAP,
    MaterialSpec,
    PolarDecomposition,
    _dop_diffuse,
    _dop_specular,
    aop_from_azimuth,
    camera_to_view,
    forward_quadruplet,
    normal_to_angles,
)

NEAR_PLANE = 1e-6


@numba.njit(cache=True, nogil=True)
def _raster_kernel(V, N, F, fx, fy, cx, cy, width, height, depth, normal, tri_id):
    n_tri = F.shape[0]
    for t in range(n_tri):
        i0, i1, i2 = F[t, 0], F[t, 1], F[t, 2]
        z0, z1, z2 = V[i0, 2], V[i1, 2], V[i2, 2]
        if z0 <= NEAR_PLANE or z1 <= NEAR_PLANE or z2 <= NEAR_PLANE:
            continue
        # back-face test in camera space
        ax, ay, az = V[i1, 0] - V[i0, 0], V[i1, 1] - V[i0, 1], V[i1, 2] - V[i0, 2]
        bx, by, bz = V[i2, 0] - V[i0, 0], V[i2, 1] - V[i0, 1], V[i2, 2] - V[i0, 2]
        nx = ay * bz - az * by
        ny = az * bx - ax * bz
        nz = ax * by - ay * bx
        if nx * V[i0, 0] + ny * V[i0, 1] + nz * V[i0, 2] >= 0.0:
            continue
        x0 = fx * V[i0, 0] / z0 + cx
        y0 = fy * V[i0, 1] / z0 + cy
        x1 = fx * V[i1, 0] / z1 + cx
        y1 = fy * V[i1, 1] / z1 + cy
        x2 = fx * V[i2, 0] / z2 + cx
        y2 = fy * V[i2, 1] / z2 + cy
        area = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
        if area == 0.0:
            continue
        if area < 0.0:
            i1, i2 = i2, i1
            z1, z2 = z2, z1
            x1, x2 = x2, x1
            y1, y2 = y2, y1
            area = -area
        # top-left edges (y down, positive orientation): dy < 0, or dy == 0 and dx > 0
        e0dx, e0dy = x2 - x1, y2 - y1
        e1dx, e1dy = x0 - x2, y0 - y2
        e2dx, e2dy = x1 - x0, y1 - y0
        tl0 = e0dy < 0.0 or (e0dy == 0.0 and e0dx > 0.0)
        tl1 = e1dy < 0.0 or (e1dy == 0.0 and e1dx > 0.0)
        tl2 = e2dy < 0.0 or (e2dy == 0.0 and e2dx > 0.0)

        xmin = max(int(np.ceil(min(x0, x1, x2) - 0.5)), 0)
        xmax = min(int(np.floor(max(x0, x1, x2) - 0.5)), width - 1)
        ymin = max(int(np.ceil(min(y0, y1, y2) - 0.5)), 0)
        ymax = min(int(np.floor(max(y0, y1, y2) - 0.5)), height - 1)
        iz0, iz1, iz2 = 1.0 / z0, 1.0 / z1, 1.0 / z2
        for py in range(ymin, ymax + 1):
            sy = py + 0.5
            for px in range(xmin, xmax + 1):
                sx = px + 0.5
                w0 = e0dx * (sy - y1) - e0dy * (sx - x1)
                w1 = e1dx * (sy - y2) - e1dy * (sx - x2)
                w2 = e2dx * (sy - y0) - e2dy * (sx - x0)
                if w0 < 0.0 or w1 < 0.0 or w2 < 0.0:
                    continue
                if (w0 == 0.0 and not tl0) or (w1 == 0.0 and not tl1) or (w2 == 0.0 and not tl2):
                    continue
                b0, b1, b2 = w0 / area, w1 / area, w2 / area
                inv_z = b0 * iz0 + b1 * iz1 + b2 * iz2
                z = 1.0 / inv_z
                if z >= depth[py, px]:
                    continue
                depth[py, px] = z
                tri_id[py, px] = t
                p0, p1, p2 = b0 * iz0 * z, b1 * iz1 * z, b2 * iz2 * z
                gx = p0 * N[i0, 0] + p1 * N[i1, 0] + p2 * N[i2, 0]
                gy = p0 * N[i0, 1] + p1 * N[i1, 1] + p2 * N[i2, 1]
                gz = p0 * N[i0, 2] + p1 * N[i1, 2] + p2 * N[i2, 2]
                g = np.sqrt(gx * gx + gy * gy + gz * gz)
                normal[py, px, 0] = gx / g
                normal[py, px, 1] = gy / g
                normal[py, px, 2] = gz / g


@dataclass(frozen=True, eq=False)
class RenderBuffers:
    """Rasterized object mask, camera-frame normal map and z-depth map.

    Background pixels carry a zero normal, infinite depth and ``tri_id = -1``.
    """

    mask: np.ndarray
    normal_map: np.ndarray
    depth_map: np.ndarray
    tri_id: np.ndarray = field(repr=False)

    @property
    def empty(self) -> bool:
        return not bool(self.mask.any())

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape


def rasterize(mesh: MeshModel, pose: Pose, K: CameraIntrinsics) -> RenderBuffers:
    V = np.ascontiguousarray(transform_points(pose, mesh.vertices))
    N = np.ascontiguousarray(mesh.normals @ pose.R.T)
    H, W = K.height, K.width
    depth = np.full((H, W), np.inf)
    normal = np.zeros((H, W, 3))
    tri_id = np.full((H, W), -1, dtype=np.int64)
    _raster_kernel(V, N, mesh.triangles, float(K.fx), float(K.fy), float(K.cx), float(K.cy),
                   W, H, depth, normal, tri_id)
    return RenderBuffers(tri_id >= 0, normal, depth, tri_id)


def backproject_depth(rb: RenderBuffers, K: CameraIntrinsics) -> np.ndarray:
    """Camera-frame 3D points for every mask pixel, shape (n, 3), row-major order."""
    rays = pixel_rays(K)[rb.mask]
    return rays * (rb.depth_map[rb.mask] / rays[:, 2])[:, None]


# --- polarimetric rendering -----------------------------------------------------

@dataclass(frozen=True)
class ShadingSpec:
    """Lambertian shading: ``ambient + albedo * max(0, n . light)`` on the object.

    ``light`` is the camera-frame unit direction towards the light source;
    ``background`` is the constant unpolarized intensity off the object.
    """

    light: tuple[float, float, float] = (0.0, 0.0, -1.0)
    ambient: float = 0.2
    albedo: float = 0.8
    background: float = 0.1

    def __post_init__(self):
        ln = np.linalg.norm(self.light)
        if abs(ln - 1.0) > 1e-9:
            object.__setattr__(self, "light", tuple(float(c) for c in np.asarray(self.light) / ln))
        if not (0 <= self.ambient <= 1 and 0 <= self.albedo <= 1 and self.background >= 0):
            raise ValueError("ambient and albedo must lie in [0, 1], background >= 0")

    def to_dict(self) -> dict:
        return {"light": list(self.light), "ambient": self.ambient, "albedo": self.albedo,
                "background": self.background}

    @classmethod
    def from_dict(cls, d: dict) -> ShadingSpec:
        return cls(tuple(d.get("light", (0.0, 0.0, -1.0))), float(d.get("ambient", 0.2)),
                   float(d.get("albedo", 0.8)), float(d.get("background", 0.1)))


@dataclass(frozen=True, eq=False)
class PolarQuadruplet:
    """Intensity images behind each polarizer, shape ``(len(angles), H, W)``."""

    images: np.ndarray
    angles: np.ndarray = field(default_factory=lambda: FILTER_ANGLES.copy())


def specular_mode_map(rb: RenderBuffers, mode) -> np.ndarray:
    """Boolean per-pixel map, True where specular reflection is assumed."""
    if isinstance(mode, str):
        if mode not in ("diffuse", "specular"):
            raise ValueError(f"unknown reflection mode {mode!r}")
        return np.full(rb.shape, mode == "specular")
    mode = np.asarray(mode, dtype=bool)
    if mode.shape != rb.shape:
        raise ValueError("mode map must match the render size")
    return mode


def view_vectors(K: CameraIntrinsics) -> np.ndarray:
    """Per-pixel unit vectors from the surface towards the camera (camera frame)."""
    return -pixel_rays(K)


def zenith_map(rb: RenderBuffers, K: CameraIntrinsics) -> np.ndarray:
    """Viewing angle per mask pixel (0 off the object), capped below grazing."""
    cos_v = np.einsum("hwi,hwi->hw", rb.normal_map, view_vectors(K))
    theta = np.minimum(np.arccos(np.clip(cos_v, 0.0, 1.0)), THETA_CAP)
    return np.where(rb.mask, theta, 0.0)


def polarization_maps(rb: RenderBuffers, K: CameraIntrinsics, m: MaterialSpec,
                      sh: ShadingSpec, mode_map=None) -> PolarDecomposition:
    """Ground-truth ``(i_un, rho, phi)`` maps that ``render_polarization`` encodes."""
    spec = specular_mode_map(rb, m.default_mode if mode_map is None else mode_map)
    n = rb.normal_map
    shade = sh.ambient + sh.albedo * np.maximum(0.0, n @ np.asarray(sh.light))
    i_un = np.where(rb.mask, shade, sh.background)
    theta = zenith_map(rb, K)
    rho = np.where(spec, _dop_specular(theta, m.eta), _dop_diffuse(theta, m.eta))
    rho = np.where(rb.mask, rho, 0.0)
    alpha = normal_to_angles(camera_to_view(n)).alpha
    phi = np.where(spec, aop_from_azimuth(alpha, "specular"), aop_from_azimuth(alpha, "diffuse"))
    phi = np.where(rb.mask & (rho > 0), phi, 0.0)
    return PolarDecomposition(i_un, rho, phi, np.zeros(rb.shape, dtype=bool))


def render_polarization(rb: RenderBuffers, K: CameraIntrinsics, m: MaterialSpec,
                        sh: ShadingSpec, mode_map=None) -> PolarQuadruplet:
    """Four polarizer images (0, 45, 90, 135 degrees) of a rasterized object."""
    d = polarization_maps(rb, K, m, sh, mode_map)
    return PolarQuadruplet(forward_quadruplet(d.i_un, d.rho, d.phi, FILTER_ANGLES), FILTER_ANGLES.copy())
