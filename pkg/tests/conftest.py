import numpy as np
import pytest

from polarforge.geometry import CameraIntrinsics
from polarforge.meshes import cup, cylinder, uv_sphere


@pytest.fixture(scope="session")
def cup_mesh():
    return cup()


@pytest.fixture(scope="session")
def sphere_mesh():
    return uv_sphere(0.05, 32, 64)


@pytest.fixture(scope="session")
def cylinder_mesh():
    return cylinder(0.03, 0.1, 48)


@pytest.fixture
def K():
    return CameraIntrinsics.centered(500.0, 256, 256)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
