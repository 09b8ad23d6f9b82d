import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("gprt", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("gprt")


def random_unit(rng, n=None):
    v = rng.normal(size=(3,) if n is None else (n, 3))
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


@pytest.fixture(scope="session")
def toy_head():
    from gprt.synth import make_toy_head

    return make_toy_head(400, seed=1)


@pytest.fixture(scope="session")
def small_rig(toy_head):
    """Toy head plus four 32x32 cameras."""
    from gprt.synth import orbit_cameras

    return toy_head, orbit_cameras(4, resolution=32)
