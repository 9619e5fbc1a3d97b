"""PFM images and self-describing polarization archives.

An archive is a directory holding one PFM per polarizer angle
(``I000.pfm``, ``I045.pfm``, ...) and ``meta.json`` with intrinsics,
material, filter angles (radians) and optionally the ground-truth pose and
extra buffers (mask, depth, normals).
"""

from __future__ import annotations

import json
import os
import re
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import CorruptArchive, PolarForgeError
from ..geometry import CameraIntrinsics, Pose
from ..polarization import FILTER_ANGLES, MaterialSpec

ARCHIVE_FORMAT = "polarforge-quadruplet"
ARCHIVE_VERSION = 1
_HEADER_RE = re.compile(rb"^(P[Ff])\s+(\d+)\s+(\d+)\s+([-+0-9.eE]+)\s")


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode())


def encode_pfm(image) -> bytes:
    """PFM bytes for an (H, W) or (H, W, 3) float image; little-endian, bottom row first."""
    img = np.asarray(image)
    if img.ndim == 2:
        magic = b"Pf"
    elif img.ndim == 3 and img.shape[2] == 3:
        magic = b"PF"
    else:
        raise ValueError(f"PFM holds (H, W) or (H, W, 3) images, got {img.shape}")
    h, w = img.shape[:2]
    data = np.ascontiguousarray(img[::-1], dtype="<f4").tobytes()
    return magic + b"\n%d %d\n-1.0\n" % (w, h) + data


def decode_pfm(buf: bytes, name: str = "<pfm>") -> np.ndarray:
    m = _HEADER_RE.match(buf)
    if m is None:
        raise CorruptArchive(f"{name}: malformed PFM header")
    channels = 3 if m.group(1) == b"PF" else 1
    w, h = int(m.group(2)), int(m.group(3))
    try:
        scale = float(m.group(4))
    except ValueError:
        raise CorruptArchive(f"{name}: malformed PFM scale") from None
    if scale == 0 or w == 0 or h == 0:
        raise CorruptArchive(f"{name}: invalid PFM header values")
    payload = buf[m.end():]
    expected = w * h * channels * 4
    if len(payload) != expected:
        raise CorruptArchive(f"{name}: expected {expected} data bytes, found {len(payload)}")
    dtype = "<f4" if scale < 0 else ">f4"
    img = np.frombuffer(payload, dtype=dtype).astype(np.float32)
    shape = (h, w, 3) if channels == 3 else (h, w)
    return img.reshape(shape)[::-1].copy()


def write_pfm(path, image) -> None:
    atomic_write_bytes(path, encode_pfm(image))


def read_pfm(path) -> np.ndarray:
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise CorruptArchive(f"cannot read {path}: {exc}") from exc
    return decode_pfm(buf, str(path))


def image_name(angle: float) -> str:
    return "I%03d" % int(round(np.rad2deg(angle)))


@dataclass(frozen=True, eq=False)
class QuadrupletArchive:
    images: np.ndarray
    intrinsics: CameraIntrinsics
    material: MaterialSpec
    pose: Pose | None = None
    filter_angles: np.ndarray = field(default_factory=lambda: FILTER_ANGLES.copy())
    mesh: str | None = None
    buffers: dict = field(default_factory=dict)

    def __post_init__(self):
        imgs = np.asarray(self.images, dtype=np.float32)
        if imgs.ndim != 3 or imgs.shape[0] != len(self.filter_angles):
            raise ValueError("images must be (n_angles, H, W)")
        if imgs.shape[1:] != self.intrinsics.shape:
            raise ValueError("image size does not match the intrinsics")
        object.__setattr__(self, "images", imgs)
        object.__setattr__(self, "filter_angles", np.asarray(self.filter_angles, dtype=np.float64))


def write_archive(a: QuadrupletArchive, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    names = {}
    for img, ang in zip(a.images, a.filter_angles):
        name = image_name(ang)
        write_pfm(d / f"{name}.pfm", img)
        names[name] = f"{name}.pfm"
    buffers = {}
    for key, arr in a.buffers.items():
        write_pfm(d / f"{key}.pfm", np.asarray(arr, dtype=np.float32))
        buffers[key] = f"{key}.pfm"
    meta = {
        "format": ARCHIVE_FORMAT,
        "version": ARCHIVE_VERSION,
        "images": names,
        "filter_angles": [float(x) for x in a.filter_angles],
        "intrinsics": a.intrinsics.to_dict(),
        "material": {"name": a.material.name, "eta": a.material.eta},
        "pose": a.pose.to_dict() if a.pose is not None else None,
        "mesh": a.mesh,
        "buffers": buffers,
    }
    atomic_write_text(d / "meta.json", json.dumps(meta, indent=2))
    return d


def read_archive(directory) -> QuadrupletArchive:
    d = Path(directory)
    try:
        meta = json.loads((d / "meta.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CorruptArchive(f"{d}: missing or unreadable meta.json ({exc})") from exc
    if meta.get("format") != ARCHIVE_FORMAT:
        raise CorruptArchive(f"{d}: not a {ARCHIVE_FORMAT} archive")
    try:
        angles = np.asarray(meta["filter_angles"], dtype=np.float64)
        K = CameraIntrinsics.from_dict(meta["intrinsics"])
        mat = MaterialSpec(float(meta["material"]["eta"]), str(meta["material"]["name"]))
        pose = Pose.from_dict(meta["pose"]) if meta.get("pose") else None
        names = meta["images"]
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptArchive(f"{d}: invalid meta.json ({exc})") from exc
    except PolarForgeError as exc:
        raise CorruptArchive(f"{d}: invalid meta.json ({exc})") from exc
    images = []
    for ang in angles:
        key = image_name(ang)
        if key not in names:
            raise CorruptArchive(f"{d}: meta.json does not reference {key}")
        img = read_pfm(d / names[key])
        if img.shape != K.shape:
            raise CorruptArchive(f"{d}: {key} is {img.shape}, intrinsics say {K.shape}")
        images.append(img)
    buffers = {}
    for key, fname in (meta.get("buffers") or {}).items():
        buf = read_pfm(d / fname)
        if buf.shape[:2] != K.shape:
            raise CorruptArchive(f"{d}: buffer {key} has mismatched dimensions")
        buffers[key] = buf
    return QuadrupletArchive(np.stack(images), K, mat, pose, angles, meta.get("mesh"), buffers)
