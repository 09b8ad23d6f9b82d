import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_unit
from gprt.errors import InvalidInputError
from gprt.lighting import PointLightSet, fibonacci_directions, latlong_grid, uniform_lights
from gprt.sph_gaussian import (SGLobe, roughness_to_sharpness, sg_env_integral, sg_eval,
                               sg_solid_integral)


def test_roughness_map():
    assert roughness_to_sharpness(1.0) == 1.0
    assert roughness_to_sharpness(0.1) == pytest.approx(100.0)
    for bad in (0.0, -0.5, 1.5):
        with pytest.raises(InvalidInputError):
            roughness_to_sharpness(bad)


def test_roughness_monotone():
    rng = np.random.default_rng(0)
    a, b = rng.uniform(1e-3, 1, 1000), rng.uniform(1e-3, 1, 1000)
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    keep = lo < hi
    assert np.all(roughness_to_sharpness(lo[keep]) > roughness_to_sharpness(hi[keep]))


def test_lobe_validation():
    with pytest.raises(InvalidInputError):
        SGLobe([0, 0, 2], 1.0)
    with pytest.raises(InvalidInputError):
        SGLobe([0, 0, 1], 0.0)
    with pytest.raises(InvalidInputError):
        SGLobe([0, 0, 1], 2e6)


def test_eval_closed_forms():
    lobe = SGLobe([0, 0, 1], 1.0)
    assert sg_eval([0, 0, 1], lobe) == 1.0
    assert sg_eval([0, 0, -1], lobe) == pytest.approx(0.1353352832, rel=1e-9)


@given(st.floats(0.0, math.pi), st.floats(0.1, 100.0), st.integers(0, 2**31))
def test_eval_depends_only_on_angle(angle, lam, seed):
    rng = np.random.default_rng(seed)
    axis = random_unit(rng)
    lobe = SGLobe(axis, lam)
    # two directions at the same angle to the axis
    perp = np.cross(axis, random_unit(rng))
    perp /= np.linalg.norm(perp)
    other = np.cross(axis, perp)
    w1 = math.cos(angle) * axis + math.sin(angle) * perp
    w2 = math.cos(angle) * axis + math.sin(angle) * other
    assert sg_eval(w1, lobe) == pytest.approx(sg_eval(w2, lobe), abs=1e-6)


def test_solid_integral_values():
    assert sg_solid_integral(1.0) == pytest.approx(2 * math.pi * (1 - math.exp(-2)))
    assert sg_solid_integral(1.0) == pytest.approx(5.4327, abs=2e-4)
    assert sg_solid_integral(100.0) == pytest.approx(0.06283, abs=1e-5)
    assert sg_solid_integral(1e-9) == pytest.approx(4 * math.pi, rel=1e-6)


@pytest.mark.parametrize("lam", [1.0, 100.0])
def test_solid_integral_quadrature(lam):
    # dense theta-phi quadrature around +z as the independent oracle
    n = 200000
    theta = (np.arange(n) + 0.5) * math.pi / n
    q = 2 * math.pi * np.sum(np.exp(lam * (np.cos(theta) - 1)) * np.sin(theta)) * math.pi / n
    assert sg_solid_integral(lam) == pytest.approx(q, rel=1e-6)


def test_env_integral_constant_light():
    out = sg_env_integral(uniform_lights(1.0), SGLobe([0.0, 1.0, 0.0], 1.0))
    np.testing.assert_allclose(out, 5.4327, rtol=0.02)


def test_env_integral_zero_empty_and_linear():
    lobe = SGLobe([0.6, 0.0, 0.8], 5.0)
    assert np.all(sg_env_integral(uniform_lights(0.0), lobe) == 0)
    with pytest.raises(InvalidInputError):
        sg_env_integral(PointLightSet(np.zeros((0, 3)), np.zeros((0, 3))), lobe)
    rng = np.random.default_rng(1)
    lights = PointLightSet(fibonacci_directions(512), rng.uniform(0, 2, (512, 3)))
    a = sg_env_integral(lights, lobe)
    assert np.array_equal(sg_env_integral(lights.scaled(2.0), lobe), 2 * a)
    assert np.all(a >= 0)


def test_analytic_sharp_uses_nearest_light():
    lights = uniform_lights(1.0)
    lobe = SGLobe(lights.directions[7], 400.0)
    out = sg_env_integral(lights, lobe, analytic_sharp=True)
    np.testing.assert_allclose(out, sg_solid_integral(400.0))
    # below the threshold the flag is inert
    soft = SGLobe(lights.directions[7], 10.0)
    assert np.array_equal(sg_env_integral(lights, soft, analytic_sharp=True), sg_env_integral(lights, soft))


@given(st.floats(0.5, 50.0), st.integers(0, 2**31))
def test_env_integral_approximates_dense_quadrature(lam, seed):
    rng = np.random.default_rng(seed)
    axis = random_unit(rng)
    key = random_unit(rng)

    def radiance(d):
        return (1.0 + 0.5 * (d @ key))[..., None] * np.ones(3)

    dirs, sa = latlong_grid(256)
    dense = np.einsum("hw,hw,hwc->c", sa, np.exp(lam * (dirs @ axis - 1)), radiance(dirs))
    fib = fibonacci_directions(512)
    approx = sg_env_integral(PointLightSet(fib, radiance(fib)), SGLobe(axis, lam))
    # lattice error for a lobe this sharp can approach a few percent at worst-case axes
    np.testing.assert_allclose(approx, dense, rtol=0.03)
