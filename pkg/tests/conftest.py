import numpy as np
import pytest

from gsray.scene_io import gen_test_scene, orbit_cameras


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_scene():
    return gen_test_scene("random-cloud", count=20, seed=1)


@pytest.fixture
def small_camera():
    return orbit_cameras(1, radius=3.0, focal=24.0, width=16, height=16)[0]


def random_shape(rng, aniso=3.0):
    from gsray.geometry import GaussianShape

    return GaussianShape(
        mean=rng.uniform(-1, 1, 3),
        quat=rng.standard_normal(4),
        scales=rng.uniform(0.05, 0.05 * aniso, 3),
        sigma=float(rng.uniform(0.5, 4.0)),
    )
