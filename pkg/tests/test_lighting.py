import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.spatial import cKDTree

from gprt.errors import InvalidInputError
from gprt.lighting import (EnvMap, PointLightSet, angles_from_dirs, dirs_from_angles,
                           envmap_to_pointlights, fibonacci_directions, latlong_grid,
                           pointlights_to_sh, random_smooth_envmap, uniform_lights)
from gprt.sh_math import project_sphere_fn


def test_fibonacci_single_and_errors():
    d = fibonacci_directions(1)
    assert d.shape == (1, 3)
    assert np.linalg.norm(d[0]) == pytest.approx(1.0)
    with pytest.raises(InvalidInputError):
        fibonacci_directions(0)


def test_fibonacci_balance_and_spacing():
    d = fibonacci_directions(512)
    assert np.linalg.norm(d.mean(axis=0)) <= 0.01
    dist, _ = cKDTree(d).query(d, k=2)
    ang = 2 * np.arcsin(dist[:, 1] / 2)
    ref = math.sqrt(4 * math.pi / 512)
    assert np.all(ang >= 0.5 * ref) and np.all(ang <= 2 * ref)
    assert np.array_equal(d, fibonacci_directions(512))


def test_angles_round_trip():
    rng = np.random.default_rng(0)
    d = rng.normal(size=(100, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    np.testing.assert_allclose(dirs_from_angles(*angles_from_dirs(d)), d, atol=1e-12)


def test_latlong_solid_angles_sum_to_sphere():
    _, sa = latlong_grid(64)
    assert sa.sum() == pytest.approx(4 * math.pi, rel=1e-3)


def test_envmap_validation():
    with pytest.raises(InvalidInputError):
        EnvMap(np.ones((4, 4, 3)))
    with pytest.raises(InvalidInputError):
        EnvMap(-np.ones((4, 8, 3)))
    with pytest.raises(InvalidInputError):
        EnvMap(np.full((4, 8, 3), np.nan))


def test_envmap_north_pole_is_row_zero():
    env = EnvMap.from_function(lambda d: np.maximum(d[..., 1:2], 0) * np.ones(3), 32)
    assert env.texels[0].mean() > 0.99 and env.texels[-1].max() == 0.0
    assert env.sample(np.array([0.0, 1.0, 0.0]))[0] > 0.99


def test_pointlight_validation():
    with pytest.raises(InvalidInputError):
        PointLightSet([[0, 0, 1]], [[-1, 0, 0]])
    with pytest.raises(InvalidInputError):
        PointLightSet([[0, 0, 1], [0, 0, 1]], np.ones((2, 3)))
    with pytest.raises(InvalidInputError):
        PointLightSet([[0, 0, 2]], np.ones((1, 3)))
    lights = PointLightSet.from_dict(uniform_lights(2.0).to_dict())
    assert lights.solid_angle == pytest.approx(4 * math.pi / 512)


def test_envmap_to_pointlights_constant_and_scaling():
    lights = envmap_to_pointlights(EnvMap.constant([1.0, 1.0, 1.0]))
    np.testing.assert_allclose(lights.intensities, 1.0)
    env = random_smooth_envmap(np.random.default_rng(3))
    a = envmap_to_pointlights(env).intensities
    b = envmap_to_pointlights(env.scaled(3.0)).intensities
    np.testing.assert_allclose(b, 3 * a, rtol=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_pointlight_flux_matches_envmap_integral(seed):
    env = random_smooth_envmap(np.random.default_rng(seed))
    lights = envmap_to_pointlights(env, 512)
    np.testing.assert_allclose(lights.total_flux(), env.integral(), rtol=0.02)


def test_pointlights_to_sh():
    c = pointlights_to_sh(uniform_lights(1.0), 3).values
    np.testing.assert_allclose(c[0], 2 * math.sqrt(math.pi), rtol=0.01)
    assert np.max(np.abs(c[1:])) < 1e-2
    assert np.all(pointlights_to_sh(uniform_lights(0.0), 3).values == 0)
    rng = np.random.default_rng(0)
    lights = PointLightSet(fibonacci_directions(512), rng.uniform(0, 1, (512, 3)))
    ref = project_sphere_fn(lights.directions, lights.intensities, lights.solid_angle, 3)
    assert np.array_equal(pointlights_to_sh(lights, 3).values, ref.values)


def test_envmap_sh_matches_pointlight_sh():
    env = random_smooth_envmap(np.random.default_rng(4))
    np.testing.assert_allclose(pointlights_to_sh(envmap_to_pointlights(env), 2).values,
                               env.to_sh(2).values, rtol=0.03, atol=0.02)


@given(st.floats(0, 5), st.floats(0, 5), st.integers(0, 2**31))
def test_conversions_linear(a, b, seed):
    rng = np.random.default_rng(seed)
    e1, e2 = random_smooth_envmap(rng, 16), random_smooth_envmap(rng, 16)
    mix = EnvMap(a * e1.texels + b * e2.texels)
    lhs = envmap_to_pointlights(mix, 64)
    rhs = a * envmap_to_pointlights(e1, 64).intensities + b * envmap_to_pointlights(e2, 64).intensities
    np.testing.assert_allclose(lhs.intensities, rhs, atol=1e-12)
    np.testing.assert_allclose(pointlights_to_sh(lhs, 2).values,
                               pointlights_to_sh(lhs.with_intensities(rhs), 2).values, atol=1e-11)
