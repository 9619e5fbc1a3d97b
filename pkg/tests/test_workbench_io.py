import json

import numpy as np
import pytest

from polarforge.errors import CorruptArchive
from polarforge.geometry import CameraIntrinsics, Pose
from polarforge.polarization import FILTER_ANGLES, MaterialSpec
from polarforge.workbench.io import (
    QuadrupletArchive,
    decode_pfm,
    encode_pfm,
    read_archive,
    read_pfm,
    write_archive,
    write_pfm,
)


def _archive(rng, material=None):
    K = CameraIntrinsics.centered(300.0, 40, 30)
    imgs = rng.uniform(0, 2, (4, 30, 40)).astype(np.float32)
    return QuadrupletArchive(imgs, K, material or MaterialSpec.named("glass"),
                             Pose(np.eye(3), [0.0, 0.0, 0.7]),
                             buffers={"mask": (rng.uniform(size=(30, 40)) > 0.5).astype(np.float32)})


def test_pfm_roundtrip_gray_and_color(tmp_path, rng):
    g = rng.normal(size=(7, 5)).astype(np.float32)
    c = rng.normal(size=(7, 5, 3)).astype(np.float32)
    write_pfm(tmp_path / "g.pfm", g)
    write_pfm(tmp_path / "c.pfm", c)
    assert np.array_equal(read_pfm(tmp_path / "g.pfm"), g)
    assert np.array_equal(read_pfm(tmp_path / "c.pfm"), c)


def test_pfm_layout():
    img = np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32)
    buf = encode_pfm(img)
    assert buf.startswith(b"Pf\n2 2\n-1.0\n")
    # bottom row first, little-endian
    assert np.array_equal(np.frombuffer(buf[-16:], "<f4"), [3, 4, 1, 2])


def test_pfm_big_endian_accepted():
    img = np.arange(6, dtype=np.float32).reshape(2, 3)
    buf = b"Pf\n3 2\n1.0\n" + img[::-1].astype(">f4").tobytes()
    assert np.array_equal(decode_pfm(buf), img)


@pytest.mark.parametrize("buf", [b"P6\n2 2\n-1.0\n" + bytes(16), b"Pf\n2 2\n-1.0\n" + bytes(15),
                                 b"Pf\n2 2\n0\n" + bytes(16), b"garbage"])
def test_pfm_corrupt(buf):
    with pytest.raises(CorruptArchive):
        decode_pfm(buf)


def test_archive_roundtrip_bitwise(tmp_path, rng):
    a = _archive(rng)
    write_archive(a, tmp_path / "a")
    b = read_archive(tmp_path / "a")
    assert np.array_equal(a.images, b.images)
    assert b.intrinsics == a.intrinsics
    assert b.material == a.material
    assert b.pose == a.pose
    assert np.array_equal(b.filter_angles, FILTER_ANGLES)
    assert np.array_equal(b.buffers["mask"], a.buffers["mask"])
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == ["I000.pfm", "I045.pfm", "I090.pfm", "I135.pfm", "mask.pfm", "meta.json"]


def test_truncated_pfm(tmp_path, rng):
    write_archive(_archive(rng), tmp_path / "a")
    f = tmp_path / "a" / "I090.pfm"
    f.write_bytes(f.read_bytes()[:-3])
    with pytest.raises(CorruptArchive):
        read_archive(tmp_path / "a")


def test_missing_member(tmp_path, rng):
    write_archive(_archive(rng), tmp_path / "a")
    (tmp_path / "a" / "I045.pfm").unlink()
    with pytest.raises(CorruptArchive):
        read_archive(tmp_path / "a")


def test_dimension_mismatch(tmp_path, rng):
    write_archive(_archive(rng), tmp_path / "a")
    write_pfm(tmp_path / "a" / "I000.pfm", np.zeros((30, 41), dtype=np.float32))
    with pytest.raises(CorruptArchive):
        read_archive(tmp_path / "a")


def test_named_material_validated(tmp_path, rng):
    write_archive(_archive(rng, MaterialSpec(2.75, "stainless steel")), tmp_path / "a")
    assert read_archive(tmp_path / "a").material.eta == 2.75
    meta_path = tmp_path / "a" / "meta.json"
    meta = json.loads(meta_path.read_text())
    meta["material"]["eta"] = 1.9
    meta_path.write_text(json.dumps(meta))
    with pytest.raises(CorruptArchive):
        read_archive(tmp_path / "a")


def test_not_an_archive(tmp_path):
    (tmp_path / "meta.json").write_text("{}")
    with pytest.raises(CorruptArchive):
        read_archive(tmp_path)
    with pytest.raises(CorruptArchive):
        read_archive(tmp_path / "nothing")
