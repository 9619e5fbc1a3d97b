"""Polarimetric image formation, Fresnel degree of polarization and its inversion.

Every function accepts scalars or numpy arrays and broadcasts. Normals given
to or returned from the shape-from-polarization side (``normal_from_angles``,
``priors_from_pixel``) live in the *view frame*: x right, y up, z towards
the camera. ``camera_to_view`` converts camera-frame (OpenCV) normals.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import BackFacing, DegenerateInput, InvalidInput, OutOfDomain

FILTER_ANGLES = np.array([0.0, np.pi / 4, np.pi / 2, 3 * np.pi / 4])
THETA_CAP = np.pi / 2 - 1e-6
BISECT_MAX_ITERS = 100
BISECT_XTOL = 1e-10
_AMP_FLOOR = 16 * np.finfo(np.float64).eps
_DOP_SLACK = 1e-12

# refractive indices per material
MATERIALS = {
    "stainless steel": 2.75,
    "glass": 1.52,
    "plastics": 1.50,
}
SPECULAR_MATERIALS = frozenset({"stainless steel"})


@dataclass(frozen=True)
class MaterialSpec:
    eta: float
    name: str = "custom"

    def __post_init__(self):
        if not 1.0 < self.eta < 4.0:
            raise InvalidInput(f"refractive index {self.eta} outside (1, 4)")
        if self.name in MATERIALS and self.eta != MATERIALS[self.name]:
            raise InvalidInput(
                f"{self.name!r} has refractive index {MATERIALS[self.name]}, got {self.eta}")

    @classmethod
    def named(cls, name: str) -> MaterialSpec:
        try:
            return cls(MATERIALS[name], name)
        except KeyError:
            raise InvalidInput(f"unknown material {name!r}; known: {sorted(MATERIALS)}") from None

    @property
    def default_mode(self) -> str:
        return "specular" if self.name in SPECULAR_MATERIALS else "diffuse"


def _eta(m) -> float:
    return float(m.eta) if isinstance(m, MaterialSpec) else float(m)


@dataclass(frozen=True, eq=False)
class PolarDecomposition:
    """Unpolarized intensity, degree and angle of polarization (scalars or maps).

    ``nonphysical`` marks samples whose fitted DoP exceeded 1 and was clamped.
    """

    i_un: np.ndarray | float
    rho: np.ndarray | float
    phi: np.ndarray | float
    nonphysical: np.ndarray | bool = False


# --- image formation ---------------------------------------------------------

def forward_intensity(d: PolarDecomposition, phi_pol):
    """Intensity behind a linear polarizer at angle ``phi_pol``."""
    return d.i_un * (1.0 + d.rho * np.cos(2.0 * (d.phi - phi_pol)))


def forward_quadruplet(i_un, rho, phi, angles=FILTER_ANGLES) -> np.ndarray:
    """Stack of intensities for each filter angle, shape ``(len(angles), *shape)``."""
    d = PolarDecomposition(np.asarray(i_un, dtype=np.float64), np.asarray(rho, dtype=np.float64),
                           np.asarray(phi, dtype=np.float64))
    return np.stack([forward_intensity(d, a) for a in np.asarray(angles, dtype=np.float64)])


def design_matrix(angles) -> np.ndarray:
    a = np.asarray(angles, dtype=np.float64)
    return np.stack([np.ones_like(a), np.cos(2 * a), np.sin(2 * a)], axis=1)


def wrap_pi(angle):
    """Reduce angles into ``[0, pi)``."""
    out = np.mod(angle, np.pi)
    return np.where(out >= np.pi, 0.0, out)


def fit_decomposition(intensities, angles=FILTER_ANGLES) -> PolarDecomposition:
    """Least-squares fit of ``(i_un, rho, phi)`` to intensities behind several polarizers.

    ``intensities`` has the filter axis first: shape ``(k, ...)``.
    """
    I = np.asarray(intensities, dtype=np.float64)
    angles = np.asarray(angles, dtype=np.float64)
    if I.shape[0] != len(angles):
        raise InvalidInput(f"{I.shape[0]} intensity images for {len(angles)} filter angles")
    if not np.all(np.isfinite(I)) or np.any(I < 0):
        raise InvalidInput("intensities must be finite and non-negative")
    A = design_matrix(angles)
    if np.linalg.matrix_rank(A) < 3:
        raise DegenerateInput("filter angles do not determine the polarization state")
    x = np.tensordot(np.linalg.pinv(A), I, axes=1)
    x1, x2, x3 = x[0], x[1], x[2]
    amp = np.hypot(x2, x3)
    # residue of cos/sin at multiples of pi/2 leaves ~1e-16 amplitude on constant signals
    amp = np.where(amp <= _AMP_FLOOR * np.abs(x1), 0.0, amp)
    safe = np.where(x1 > 0, x1, 1.0)
    rho = np.where(x1 > 0, amp / safe, 0.0)
    nonphysical = rho > 1.0
    rho = np.minimum(rho, 1.0)
    phi = np.where(amp > 0, wrap_pi(0.5 * np.arctan2(x3, x2)), 0.0)
    i_un = np.maximum(x1, 0.0)
    if np.ndim(i_un) == 0:
        return PolarDecomposition(float(i_un), float(rho), float(phi), bool(nonphysical))
    return PolarDecomposition(i_un, rho, phi, nonphysical)


def aop_from_azimuth(alpha, mode: str = "diffuse"):
    """Angle of polarization produced by a surface with normal azimuth ``alpha``."""
    if mode == "diffuse":
        return wrap_pi(alpha)
    if mode == "specular":
        return wrap_pi(np.asarray(alpha) - np.pi / 2)
    raise InvalidInput(f"mode must be 'diffuse' or 'specular', got {mode!r}")


# --- Fresnel degree of polarization -------------------------------------------

def _check_theta(theta, upper, inclusive, what):
    t = np.asarray(theta, dtype=np.float64)
    bad = (t < 0) | ((t > upper) if inclusive else (t >= upper)) | ~np.isfinite(t)
    if np.any(bad):
        raise OutOfDomain(f"{what}: zenith angle outside [0, {upper:.12g}{']' if inclusive else ')'}")
    return t


def _dop_diffuse(t, eta):
    s2 = np.sin(t) ** 2
    num = (eta - 1.0 / eta) ** 2 * s2
    den = 2.0 + 2.0 * eta**2 - (eta + 1.0 / eta) ** 2 * s2 + 4.0 * np.cos(t) * np.sqrt(eta**2 - s2)
    return num / den


def _dop_specular(t, eta):
    s2 = np.sin(t) ** 2
    root = np.sqrt(eta**2 - s2)
    num = 2.0 * s2 * np.cos(t) * root
    den = eta**2 - s2 - eta**2 * s2 + 2.0 * s2**2
    return num / den


def dop_diffuse(theta, m):
    """DoP of diffusely reflected light at zenith ``theta``."""
    t = _check_theta(theta, np.pi / 2 - 1e-9, True, "dop_diffuse")
    return _dop_diffuse(t, _eta(m))


def dop_specular(theta, m):
    """DoP of specularly reflected light at zenith ``theta``; equals 1 at Brewster's angle."""
    t = _check_theta(theta, np.pi / 2, False, "dop_specular")
    return _dop_specular(t, _eta(m))


def brewster_angle(m) -> float:
    return float(np.arctan(_eta(m)))


def diffuse_dop_limit(m) -> float:
    """Supremum of the diffuse DoP, reached at grazing incidence."""
    eta = _eta(m)
    return (eta - 1.0 / eta) ** 2 / (2.0 + 2.0 * eta**2 - (eta + 1.0 / eta) ** 2)


# --- inversion -------------------------------------------------------------------

def bisect_monotone(f, target, lo, hi, increasing=True, max_iters=BISECT_MAX_ITERS,
                    xtol=BISECT_XTOL):
    """Vectorised bisection for ``f(x) = target`` on a monotone bracket ``[lo, hi]``."""
    target = np.asarray(target, dtype=np.float64)
    lo = np.broadcast_to(np.asarray(lo, dtype=np.float64), target.shape).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=np.float64), target.shape).copy()
    for _ in range(max_iters):
        mid = 0.5 * (lo + hi)
        below = f(mid) < target
        go_right = below if increasing else ~below
        lo = np.where(go_right, mid, lo)
        hi = np.where(go_right, hi, mid)
        if np.all(hi - lo <= xtol):
            break
    return 0.5 * (lo + hi)


class DopInversion(NamedTuple):
    """Zenith angles consistent with an observed DoP; NaN (arrays) or None (scalars) if absent.

    ``s2_at_limit`` is set where the observed DoP lies below the specular
    DoP at the grazing cap, so ``theta_s2`` is the branch endpoint rather
    than an exact root.
    """

    theta_d: np.ndarray | float | None
    theta_s1: np.ndarray | float | None
    theta_s2: np.ndarray | float | None
    s2_at_limit: np.ndarray | bool


def invert_dop(rho, m) -> DopInversion:
    """Solve the diffuse and both specular DoP relations for the zenith angle."""
    eta = _eta(m)
    r = np.asarray(rho, dtype=np.float64)
    if np.any(~np.isfinite(r)) or np.any((r < 0) | (r > 1 + _DOP_SLACK)):
        raise OutOfDomain("DoP must lie in [0, 1]")
    r = np.minimum(r, 1.0)
    tb = np.arctan(eta)
    f_d = lambda t: _dop_diffuse(t, eta)  # noqa: E731
    f_s = lambda t: _dop_specular(t, eta)  # noqa: E731
    d_cap = f_d(THETA_CAP)
    s_peak = min(f_s(tb), 1.0)
    s_cap = f_s(THETA_CAP)

    theta_d = bisect_monotone(f_d, np.minimum(r, d_cap), 0.0, THETA_CAP, increasing=True)
    theta_d = np.where(r >= d_cap, THETA_CAP, theta_d)
    theta_d = np.where(r <= 0.0, 0.0, theta_d)
    theta_d = np.where(r > diffuse_dop_limit(eta), np.nan, theta_d)

    theta_s1 = bisect_monotone(f_s, r, 0.0, tb, increasing=True)
    theta_s1 = np.where(r <= 0.0, 0.0, theta_s1)
    theta_s1 = np.where(r >= s_peak, tb, theta_s1)

    at_limit = r < s_cap
    theta_s2 = bisect_monotone(f_s, np.maximum(r, s_cap), tb, THETA_CAP, increasing=False)
    theta_s2 = np.where(at_limit, THETA_CAP, theta_s2)
    theta_s2 = np.where(r >= s_peak, tb, theta_s2)

    if r.ndim == 0:
        def scalar(x):
            return None if np.isnan(x) else float(x)
        return DopInversion(scalar(theta_d), scalar(theta_s1), scalar(theta_s2), bool(at_limit))
    return DopInversion(theta_d, theta_s1, theta_s2, at_limit)


# --- normals ------------------------------------------------------------------------

class NormalAngles(NamedTuple):
    alpha: float
    theta: float


def normal_from_angles(alpha, theta) -> np.ndarray:
    """Unit normal from azimuth and zenith, shape ``(..., 3)``."""
    alpha = np.asarray(alpha, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    st = np.sin(theta)
    return np.stack([np.cos(alpha) * st, np.sin(alpha) * st, np.cos(theta)], axis=-1)


def normal_to_angles(n) -> NormalAngles:
    n = np.asarray(n, dtype=np.float64)
    alpha = np.mod(np.arctan2(n[..., 1], n[..., 0]), 2 * np.pi)
    theta = np.arccos(np.clip(n[..., 2], -1.0, 1.0))
    return NormalAngles(alpha, theta)


def camera_to_view(n_cam) -> np.ndarray:
    """Camera-frame (x right, y down, z forward) vectors to the view frame (y up, z to camera)."""
    n = np.asarray(n_cam, dtype=np.float64)
    return n * np.array([1.0, -1.0, -1.0])


view_to_camera = camera_to_view


@dataclass(frozen=True, eq=False)
class NormalPriors:
    """The diffuse and two specular candidate normals (view frame) with validity flags."""

    n_d: np.ndarray
    n_s1: np.ndarray
    n_s2: np.ndarray
    valid_d: np.ndarray | bool
    valid_s1: np.ndarray | bool
    valid_s2: np.ndarray | bool

    def stacked(self) -> np.ndarray:
        return np.stack([self.n_d, self.n_s1, self.n_s2], axis=-2)


def priors_from_pixel(d: PolarDecomposition, m) -> NormalPriors:
    """Candidate surface normals for observed ``(rho, phi)``.

    Missing solutions are replaced by the placeholder ``(0, 0, 1)`` and
    flagged invalid. The second specular branch is flagged invalid when it
    only reaches the grazing cap without matching the observed DoP.
    """
    rho = np.asarray(d.rho, dtype=np.float64)
    phi = np.asarray(d.phi, dtype=np.float64)
    inv = invert_dop(np.clip(rho, 0.0, 1.0), m)
    up = np.array([0.0, 0.0, 1.0])

    def build(alpha, theta, valid):
        theta = np.asarray(np.nan if theta is None else theta, dtype=np.float64)
        valid = np.asarray(valid) & np.isfinite(theta)
        n = normal_from_angles(alpha, np.where(valid, theta, 0.0))
        n = np.where(valid[..., None], n, up)
        return n, (bool(valid) if valid.ndim == 0 else valid)

    alpha_d = phi
    alpha_s = np.mod(phi + np.pi / 2, 2 * np.pi)
    n_d, v_d = build(alpha_d, inv.theta_d, True)
    n_s1, v_s1 = build(alpha_s, inv.theta_s1, True)
    n_s2, v_s2 = build(alpha_s, inv.theta_s2, ~np.asarray(inv.s2_at_limit))
    return NormalPriors(n_d, n_s1, n_s2, v_d, v_s1, v_s2)


@dataclass(frozen=True, eq=False)
class AnalyticDoP:
    rho_d_hat: np.ndarray | float
    rho_s_hat: np.ndarray | float


def analytic_dop_from_normal(n, v, m, clamp_backfacing: bool = False) -> AnalyticDoP:
    """Diffuse and specular DoP predicted for normal ``n`` seen along view vector ``v``.

    ``v`` points from the surface towards the camera. Both arguments may be
    arrays of shape ``(..., 3)`` in any common frame. Grazing angles are
    capped at ``THETA_CAP``; back-facing pairs raise unless
    ``clamp_backfacing`` is set, in which case they are treated as grazing.
    """
    n = np.asarray(n, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    cos_v = np.einsum("...i,...i->...", n, v)
    if not clamp_backfacing and np.any(cos_v < -1e-9):
        raise BackFacing("normal faces away from the viewer")
    theta = np.minimum(np.arccos(np.clip(cos_v, 0.0, 1.0)), THETA_CAP)
    eta = _eta(m)
    rd, rs = _dop_diffuse(theta, eta), _dop_specular(theta, eta)
    if np.ndim(rd) == 0:
        return AnalyticDoP(float(rd), float(rs))
    return AnalyticDoP(rd, rs)
