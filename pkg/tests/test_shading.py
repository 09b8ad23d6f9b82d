import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from conftest import random_unit
from gprt.errors import InvalidInputError
from gprt.lighting import (EnvMap, PointLightSet, envmap_to_pointlights, fibonacci_directions,
                           pointlights_to_sh, random_smooth_envmap, uniform_lights)
from gprt.shading import (SCHLICK_F0, ShadingConfig, TransferParams, compose_normals, reflect,
                          schlick_factor, shade_diffuse, shade_gaussian, shade_gaussian_preclamp,
                          shade_specular, specular_light_matrix)
from gprt.sh_math import SHCoeffs
from gprt.sph_gaussian import sg_solid_integral
from gprt.synth import quadrature_shade

seeds = st.integers(0, 2**31)


def lambertian(normals, albedo=(0.6, 0.4, 0.3), order=3, roughness=0.5, visibility=0.0):
    return TransferParams.lambertian(normals, albedo, order, roughness, visibility)


def random_params(rng, k, order=3):
    m = (order + 1) ** 2 - 4
    return TransferParams(rng.uniform(0, 1, (k, 3)), rng.normal(0, 0.3, (k, 4, 3)), rng.normal(0, 0.1, (k, m)),
                          rng.uniform(0.2, 1, k), rng.uniform(0, 1, k), rng.normal(0, 0.1, (k, 3)))


def test_lambertian_oracle_under_uniform_light():
    n = random_unit(np.random.default_rng(0), 50)
    tp = lambertian(n)
    out = shade_diffuse(tp.albedo, tp.d_color, tp.d_mono, pointlights_to_sh(uniform_lights(1.0), 3))
    np.testing.assert_allclose(out, np.broadcast_to([0.6, 0.4, 0.3], out.shape), rtol=0.02)


def test_diffuse_zero_light_and_order_mismatch():
    tp = lambertian(np.array([[0.0, 0.0, 1.0]]))
    assert not shade_diffuse(tp.albedo, tp.d_color, tp.d_mono, SHCoeffs(3, np.zeros((16, 3)))).any()
    with pytest.raises(InvalidInputError):
        shade_diffuse(tp.albedo, tp.d_color, tp.d_mono, SHCoeffs(1, np.ones((4, 3))))


def test_transfer_validation():
    with pytest.raises(InvalidInputError):
        lambertian(np.array([[0, 0, 1.0]]), albedo=(1.2, 0, 0))
    with pytest.raises(InvalidInputError):
        lambertian(np.array([[0, 0, 1.0]]), roughness=0.0)
    with pytest.raises(InvalidInputError):
        lambertian(np.array([[0, 0, 1.0]]), visibility=1.5)
    with pytest.raises(InvalidInputError):
        TransferParams(np.ones((1, 3)), np.zeros((1, 4, 3)), np.zeros((1, 6)), [0.5], [0.1])


def test_reflect_examples():
    z = np.array([0.0, 0.0, 1.0])
    np.testing.assert_allclose(reflect(z, z), z)
    np.testing.assert_allclose(reflect([1.0, 0, 0], z), [-1, 0, 0])
    s = 1 / math.sqrt(2)
    np.testing.assert_allclose(reflect([s, 0, s], z), [-s, 0, s])


@given(seeds)
def test_reflect_unit_and_involution(seed):
    rng = np.random.default_rng(seed)
    wo, n = random_unit(rng, 20), random_unit(rng, 20)
    a = reflect(wo, n)
    np.testing.assert_allclose(np.linalg.norm(a, axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(reflect(a, n), wo, atol=1e-12)


def test_compose_normals():
    np.testing.assert_allclose(compose_normals([[0, 0, 1.0]], [[0.0, 0, 0]]), [[0, 0, 1]])
    with pytest.raises(InvalidInputError):
        compose_normals([[0, 0, 1.0]], [[0, 0, -1.0]])


def test_specular_examples():
    z = np.array([[0.0, 0.0, 1.0]])
    off = lambertian(z, visibility=0.0)
    assert not shade_specular(off, z, z, uniform_lights(3.0)).any()
    on = lambertian(z, roughness=1.0, visibility=1.0)
    np.testing.assert_allclose(shade_specular(on, z, z, uniform_lights(1.0)), 5.4327, rtol=0.02)


def test_specular_prefers_mirror_direction():
    n = np.array([[0.0, 0.0, 1.0]])
    wo = np.array([[0.6, 0.0, 0.8]])
    mirror = reflect(wo, n)[0]
    away = np.array([0.0, 1.0, 0.0])  # 90 degrees from the mirror direction
    tp = lambertian(n, roughness=0.4, visibility=0.5)
    at = shade_specular(tp, n, wo, PointLightSet(mirror[None], np.ones((1, 3)), 0.1))
    off = shade_specular(tp, n, wo, PointLightSet(away[None], np.ones((1, 3)), 0.1))
    assert np.all(at > off)


def test_schlick_factor_limits():
    n = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]])
    wo = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
    np.testing.assert_allclose(schlick_factor(n, wo), [SCHLICK_F0, 1.0])


def test_schlick_flag_scales_specular():
    rng = np.random.default_rng(0)
    n, wo = random_unit(rng, 10), random_unit(rng, 10)
    tp = random_params(rng, 10)
    lights = uniform_lights(1.0)
    plain = shade_specular(tp, n, wo, lights)
    mod = shade_specular(tp, n, wo, lights, ShadingConfig(schlick_visibility=True))
    np.testing.assert_allclose(mod, plain * schlick_factor(compose_normals(n, tp.normal_offset), wo)[:, None])


def test_specular_light_matrix_analytic_sharp():
    dirs = fibonacci_directions(64)
    m = specular_light_matrix(dirs[[3]], np.array([500.0]), dirs, 0.2, analytic_sharp=True)
    assert m[0, 3] == pytest.approx(sg_solid_integral(500.0)) and np.count_nonzero(m) == 1


def test_gaussian_shading_zero_and_diffuse_only():
    rng = np.random.default_rng(1)
    n, wo = random_unit(rng, 8), random_unit(rng, 8)
    tp = random_params(rng, 8)
    dark = uniform_lights(0.0)
    assert not shade_gaussian(tp, n, wo, pointlights_to_sh(dark, 3), dark).any()
    lights = envmap_to_pointlights(random_smooth_envmap(rng))
    sh = pointlights_to_sh(lights, 3)
    no_spec = tp.replace(visibility=np.zeros(8))
    np.testing.assert_array_equal(shade_gaussian_preclamp(no_spec, n, wo, sh, lights),
                                  shade_diffuse(tp.albedo, tp.d_color, tp.d_mono, sh))
    assert shade_gaussian(tp, n, wo, sh, lights).min() >= 0


@given(seeds)
def test_light_linearity(seed):
    rng = np.random.default_rng(seed)
    n, wo = random_unit(rng, 6), random_unit(rng, 6)
    tp = random_params(rng, 6)
    dirs = fibonacci_directions(128)
    l1 = PointLightSet(dirs, rng.uniform(0, 2, (128, 3)))
    l2 = PointLightSet(dirs, rng.uniform(0, 2, (128, 3)))
    both = PointLightSet(dirs, l1.intensities + l2.intensities)

    def shade(lights):
        return shade_gaussian_preclamp(tp, n, wo, pointlights_to_sh(lights, 3), lights)

    np.testing.assert_allclose(shade(both), shade(l1) + shade(l2), atol=1e-10)


@given(seeds)
def test_diffuse_view_independent(seed):
    rng = np.random.default_rng(seed)
    n = random_unit(rng, 5)
    tp = random_params(rng, 5).replace(visibility=np.zeros(5))
    lights = uniform_lights(0.7)
    sh = pointlights_to_sh(lights, 3)
    a = shade_gaussian_preclamp(tp, n, random_unit(rng, 5), sh, lights)
    b = shade_gaussian_preclamp(tp, n, random_unit(rng, 5), sh, lights)
    np.testing.assert_array_equal(a, b)


@given(seeds)
def test_specular_rotation_invariance(seed):
    rng = np.random.default_rng(seed)
    n, wo = random_unit(rng, 6), random_unit(rng, 6)
    tp = random_params(rng, 6).replace(normal_offset=np.zeros((6, 3)))
    lights = PointLightSet(fibonacci_directions(256), rng.uniform(0, 1, (256, 3)))
    r = Rotation.random(random_state=seed % (2**32 - 1)).as_matrix()
    rotated = PointLightSet(lights.directions @ r.T, lights.intensities)
    np.testing.assert_allclose(shade_specular(tp, n @ r.T, wo @ r.T, rotated),
                               shade_specular(tp, n, wo, lights), atol=1e-5)


@settings(max_examples=3)
@given(seeds)
def test_order2_lambertian_matches_quadrature(seed):
    rng = np.random.default_rng(seed)
    env = random_smooth_envmap(rng, 64)
    n = random_unit(rng, 100)
    tp = lambertian(n, order=2)
    sh = pointlights_to_sh(envmap_to_pointlights(env), 2)
    approx = shade_diffuse(tp.albedo, tp.d_color, tp.d_mono, sh)
    exact = quadrature_shade(n, tp.albedo, env, grid_height=128)
    rel_rmse = np.sqrt(np.mean((approx - exact) ** 2)) / np.sqrt(np.mean(exact**2))
    assert rel_rmse <= 0.03
