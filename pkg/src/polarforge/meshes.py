"""Procedural test meshes: UV sphere, capped cylinder and a cup with a handle.

All meshes are wound counter-clockwise seen from outside and carry analytic
vertex normals. Creases (rims, cap edges) use duplicated vertices so that
each vertex has a single normal.
"""

from __future__ import annotations

import numpy as np

from .geometry import MeshModel


class _Builder:
    def __init__(self):
        self.v, self.n, self.f = [], [], []
        self.count = 0

    def add(self, V, N, F):
        V = np.asarray(V, dtype=np.float64).reshape(-1, 3)
        N = np.asarray(N, dtype=np.float64).reshape(-1, 3)
        N = N / np.linalg.norm(N, axis=1, keepdims=True)
        F = np.asarray(F, dtype=np.int64).reshape(-1, 3)
        # orient every face so that its geometric normal agrees with the shading normal
        fn = np.cross(V[F[:, 1]] - V[F[:, 0]], V[F[:, 2]] - V[F[:, 0]])
        flip = np.einsum("ij,ij->i", fn, N[F].sum(axis=1)) < 0
        F[flip] = F[flip][:, [0, 2, 1]]
        self.v.append(V)
        self.n.append(N)
        self.f.append(F + self.count)
        self.count += len(V)

    def grid(self, P, N, closed_u=True):
        """Quad grid over ``P`` of shape (rows, cols, 3); columns wrap if ``closed_u``."""
        rows, cols = P.shape[:2]
        idx = np.arange(rows * cols).reshape(rows, cols)
        nxt = np.roll(idx, -1, axis=1) if closed_u else idx[:, 1:]
        cur = idx if closed_u else idx[:, :-1]
        a, b = cur[:-1], nxt[:-1]
        c, d = nxt[1:], cur[1:]
        F = np.concatenate([np.stack([a, b, c], -1).reshape(-1, 3),
                            np.stack([a, c, d], -1).reshape(-1, 3)])
        self.add(P.reshape(-1, 3), N.reshape(-1, 3), F)

    def fan(self, center, ring, normal):
        k = len(ring)
        V = np.vstack([center, ring])
        N = np.repeat(np.asarray(normal, dtype=np.float64)[None], k + 1, axis=0)
        j = np.arange(k)
        F = np.stack([np.zeros(k, dtype=np.int64), 1 + j, 1 + (j + 1) % k], -1)
        self.add(V, N, F)

    def build(self, name, diameter=-1.0) -> MeshModel:
        return MeshModel(np.vstack(self.v), np.vstack(self.f), np.vstack(self.n),
                         diameter=diameter, name=name)


def uv_sphere(radius: float = 1.0, n_lat: int = 48, n_lon: int = 96) -> MeshModel:
    b = _Builder()
    theta = np.linspace(0.0, np.pi, n_lat + 1)[1:-1]
    phi = np.linspace(0.0, 2 * np.pi, n_lon, endpoint=False)
    T, P = np.meshgrid(theta, phi, indexing="ij")
    dirs = np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], -1)
    b.grid(radius * dirs, dirs)
    top, bottom = dirs[0], dirs[-1]
    for ring, pole in ((top, [0.0, 0.0, 1.0]), (bottom, [0.0, 0.0, -1.0])):
        V = np.vstack([pole, ring]) * radius
        N = np.vstack([pole, ring])
        k = len(ring)
        j = np.arange(k)
        F = np.stack([np.zeros(k, dtype=np.int64), 1 + j, 1 + (j + 1) % k], -1)
        b.add(V, N, F)
    return b.build("sphere", diameter=2.0 * radius)


def cylinder(radius: float = 1.0, height: float = 2.0, segments: int = 64) -> MeshModel:
    """Capped cylinder about the z axis, centred at the origin."""
    b = _Builder()
    phi = np.linspace(0.0, 2 * np.pi, segments, endpoint=False)
    ring = np.stack([np.cos(phi), np.sin(phi), np.zeros_like(phi)], -1)
    z = np.array([-height / 2, height / 2])
    P = radius * ring[None] + z[:, None, None] * np.array([0.0, 0.0, 1.0])
    b.grid(P, np.broadcast_to(ring, P.shape).copy())
    for zc, nz in ((height / 2, 1.0), (-height / 2, -1.0)):
        b.fan([0.0, 0.0, zc], radius * ring + [0.0, 0.0, zc], [0.0, 0.0, nz])
    return b.build("cylinder")


def _revolve(b: _Builder, profile_r, profile_z, normal_r, normal_z, phi):
    c, s = np.cos(phi), np.sin(phi)
    P = np.stack([profile_r[:, None] * c, profile_r[:, None] * s,
                  np.broadcast_to(profile_z[:, None], (len(profile_r), len(phi)))], -1)
    N = np.stack([normal_r[:, None] * c, normal_r[:, None] * s,
                  np.broadcast_to(normal_z[:, None], (len(profile_r), len(phi)))], -1)
    b.grid(P, N)


def cup(height: float = 0.10, r_top: float = 0.045, r_bottom: float = 0.035,
        wall: float = 0.004, segments: int = 64, with_handle: bool = True) -> MeshModel:
    """Tapered open cup with an optional torus-segment handle on the +x side.

    The origin sits at mid-height on the axis.
    """
    b = _Builder()
    phi = np.linspace(0.0, 2 * np.pi, segments, endpoint=False)
    z0 = -height / 2
    slope = (r_top - r_bottom) / height
    nr, nz = 1.0, -slope
    nn = np.hypot(nr, nz)
    nr, nz = nr / nn, nz / nn
    rows = 8
    zs = np.linspace(z0, z0 + height, rows)
    rs = r_bottom + (zs - z0) * slope
    _revolve(b, rs, zs, np.full(rows, nr), np.full(rows, nz), phi)

    # inner wall faces the axis
    ri_b, ri_t = r_bottom - wall, r_top - wall
    zi = np.linspace(z0 + wall, z0 + height, rows)
    ri = ri_b + (zi - zi[0]) * (ri_t - ri_b) / (zi[-1] - zi[0])
    _revolve(b, ri, zi, np.full(rows, -nr), np.full(rows, -nz), phi)

    ring = np.stack([np.cos(phi), np.sin(phi), np.zeros_like(phi)], -1)
    # rim annulus
    P = np.stack([ri_t * ring, r_top * ring]) + [0.0, 0.0, z0 + height]
    b.grid(P, np.broadcast_to([0.0, 0.0, 1.0], P.shape).copy())
    b.fan([0.0, 0.0, z0], r_bottom * ring + [0.0, 0.0, z0], [0.0, 0.0, -1.0])
    b.fan([0.0, 0.0, z0 + wall], ri_b * ring + [0.0, 0.0, z0 + wall], [0.0, 0.0, 1.0])

    if with_handle:
        major, minor = 0.28 * height, 0.06 * height
        r_mid = r_bottom + 0.5 * height * slope
        center = np.array([r_mid + 0.35 * major, 0.0, 0.0])
        s = np.linspace(-0.62 * np.pi, 0.62 * np.pi, 24)
        u = np.linspace(0.0, 2 * np.pi, 16, endpoint=False)
        S, U = np.meshgrid(s, u, indexing="ij")
        radial = np.stack([np.cos(S), np.zeros_like(S), np.sin(S)], -1)
        binormal = np.array([0.0, 1.0, 0.0])
        N = np.cos(U)[..., None] * radial + np.sin(U)[..., None] * binormal
        P = center + major * radial + minor * N
        b.grid(P, N)
    return b.build("cup")
