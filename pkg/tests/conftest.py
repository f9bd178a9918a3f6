import numpy as np
import pytest

from armcal import CameraIntrinsics, Rng, load_chain
from armcal.fixtures import load_chain_fixture


@pytest.fixture(scope="session")
def arm7():
    return load_chain_fixture("arm7")


@pytest.fixture(scope="session")
def mixed3():
    return load_chain_fixture("mixed3")


@pytest.fixture(scope="session")
def intrinsics():
    return CameraIntrinsics(fx=500.0, fy=500.0, cx=320.0, cy=240.0, width=640, height=480)


@pytest.fixture()
def single_revolute_chain():
    """One z-axis revolute joint at the base, keypoint 1 m out along +x."""
    return load_chain(
        """
        {"name": "onejoint",
         "joints": [{"name": "j1", "kind": "revolute",
                     "origin": {"xyz": [0, 0, 0], "rpy": [0, 0, 0]},
                     "axis": [0, 0, 1], "limits": [-3.14, 3.14]}],
         "keypoints": [{"name": "tip", "link": 1, "offset": [1, 0, 0]}]}
        """
    )


def random_rotation_vector(rng: Rng, max_angle: float) -> np.ndarray:
    """Uniform random axis, uniform angle in (0, max_angle)."""
    v = np.array([rng.normal(), rng.normal(), rng.normal()])
    v /= np.linalg.norm(v)
    return v * rng.uniform(1e-12, max_angle)
