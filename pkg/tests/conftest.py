import numpy as np
import pytest

from cuspidal_kit.kinematics import RobotModel
from cuspidal_kit.scenarios import canonical_3r, elbow_3r, three_parallel_6r


@pytest.fixture(scope="session")
def r3():
    return canonical_3r()


@pytest.fixture(scope="session")
def r6():
    return three_parallel_6r()


@pytest.fixture(scope="session")
def elbow():
    return elbow_3r()


def random_6r(rng) -> RobotModel:
    axes = rng.normal(size=(6, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    return RobotModel(axes=axes, offsets=rng.normal(size=(6, 3)) * 0.4,
                      tool_offset=rng.normal(size=3) * 0.2, name="random-6r")
