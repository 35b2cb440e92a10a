import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hsdr.hsio import SceneSpec, generate_scene

settings.register_profile(
    "hsdr", deadline=None, max_examples=40, derandomize=True,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("hsdr")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_scene():
    """30 x 30 scene with 20 bands: (cube, labels, abundances, endmembers)."""
    return generate_scene(SceneSpec(lines=30, samples=30, bands=20, endmember_count=4, seed=3))


@pytest.fixture(scope="session")
def full_rank_pixels():
    rng = np.random.default_rng(99)
    return rng.random((400, 12)) + 0.1
