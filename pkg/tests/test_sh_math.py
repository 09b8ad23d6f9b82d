import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import sph_harm_y

from conftest import random_unit
from gprt.errors import InvalidInputError, UnsupportedOrderError
from gprt.lighting import fibonacci_directions
from gprt.sh_math import (SHCoeffs, clamped_cosine_coeffs, clamped_cosine_zonal, eval_sh_basis,
                          num_coeffs, project_sphere_fn, sh_basis, sh_index)

unit_vectors = st.tuples(*[st.floats(-1, 1)] * 3).filter(lambda v: np.linalg.norm(v) > 0.1).map(
    lambda v: np.asarray(v) / np.linalg.norm(v))


def scipy_real_sh(dirs, order):
    """Independent real SH from scipy's complex harmonics, phase removed."""
    theta = np.arccos(np.clip(dirs[:, 2], -1, 1))
    phi = np.arctan2(dirs[:, 1], dirs[:, 0])
    out = np.zeros((len(dirs), num_coeffs(order)))
    for l in range(order + 1):
        for m in range(-l, l + 1):
            y = sph_harm_y(l, abs(m), theta, phi) * (-1) ** abs(m)
            if m == 0:
                val = y.real
            elif m > 0:
                val = math.sqrt(2) * y.real
            else:
                val = math.sqrt(2) * y.imag
            out[:, sh_index(l, m)] = val
    return out


def test_constant_band():
    assert eval_sh_basis([0, 0, 1], 0) == pytest.approx([0.282095], abs=1e-6)
    assert eval_sh_basis([0.6, 0, 0.8], 0) == pytest.approx([0.282095], abs=1e-6)


def test_band1_is_linear_in_y_z_x():
    d = np.array([0.48, 0.6, 0.64])
    c = math.sqrt(3 / (4 * math.pi))
    assert eval_sh_basis(d, 1)[1:] == pytest.approx(c * d[[1, 2, 0]])


def test_matches_scipy_up_to_order_8():
    rng = np.random.default_rng(0)
    d = random_unit(rng, 200)
    np.testing.assert_allclose(sh_basis(d, 8), scipy_real_sh(d, 8), atol=1e-10)


def test_errors():
    with pytest.raises(InvalidInputError):
        eval_sh_basis([0, 0, 2], 2)
    with pytest.raises(UnsupportedOrderError):
        eval_sh_basis([0, 0, 1], 9)
    with pytest.raises(InvalidInputError):
        project_sphere_fn(np.zeros((0, 3)), np.zeros(0), np.zeros(0), 2)
    with pytest.raises(InvalidInputError):
        SHCoeffs(1, np.zeros(3))
    with pytest.raises(UnsupportedOrderError):
        clamped_cosine_coeffs([0, 0, 1], 5)


def test_gram_matrix_fibonacci():
    # deterministic companion of the Monte Carlo acceptance check
    d = fibonacci_directions(20000)
    y = sh_basis(d, 3)
    gram = y.T @ y * (4 * math.pi / len(d))
    np.testing.assert_allclose(gram, np.eye(16), atol=2e-3)


def test_projection_of_constant_and_y10():
    d = fibonacci_directions(20000)
    w = 4 * math.pi / len(d)
    c = project_sphere_fn(d, np.ones(len(d)), w, 3).values[:, 0]
    assert c[0] == pytest.approx(2 * math.sqrt(math.pi), rel=1e-3)
    assert np.max(np.abs(c[1:])) < 1e-2
    f = sh_basis(d, 1)[:, sh_index(1, 0)]
    c = project_sphere_fn(d, f, w, 1).values[:, 0]
    assert c[sh_index(1, 0)] == pytest.approx(1.0, abs=1e-2)
    assert np.max(np.abs(np.delete(c, sh_index(1, 0)))) < 1e-2


def test_projection_weight_check():
    d = fibonacci_directions(100)
    with pytest.raises(InvalidInputError):
        project_sphere_fn(d, np.ones(100), 1.0, 2)
    project_sphere_fn(d, np.ones(100), 1.0, 2, check_weights=False)


def test_clamped_cosine_projection_matches_analytic():
    d = fibonacci_directions(40000)
    f = np.maximum(0.0, d[:, 2])
    c = project_sphere_fn(d, f, 4 * math.pi / len(d), 2).values[:, 0]
    np.testing.assert_allclose(c, clamped_cosine_coeffs([0, 0, 1], 2).values[:, 0], atol=1e-2)


def test_clamped_cosine_zonal_values():
    c = clamped_cosine_coeffs([0, 0, 1], 4).values[:, 0]
    assert c[0] == pytest.approx(math.sqrt(math.pi) / 2, rel=1e-12)
    zonal = [sh_index(l, 0) for l in range(5)]
    assert np.all(np.delete(c, zonal) == 0.0)
    # band 1: sqrt(pi/3), band 3 vanishes for the clamped cosine
    assert c[sh_index(1, 0)] == pytest.approx(math.sqrt(math.pi / 3))
    assert clamped_cosine_zonal(3)[3] == 0.0


def test_clamped_cosine_zonal_matches_quadrature():
    t = np.linspace(0, 1, 200001)
    for l, z in enumerate(clamped_cosine_zonal(4)):
        p = np.polynomial.legendre.Legendre.basis(l)(t)
        q = 2 * math.pi * math.sqrt((2 * l + 1) / (4 * math.pi)) * np.trapezoid(t * p, t)
        assert z == pytest.approx(q, abs=1e-8)


@given(unit_vectors, st.integers(0, 2**31))
def test_clamped_cosine_peaks_at_normal(n, seed):
    rng = np.random.default_rng(seed)
    c = clamped_cosine_coeffs(n, 2).values[:, 0]
    peak = c @ eval_sh_basis(n, 2)
    others = sh_basis(random_unit(rng, 50), 2) @ c
    assert np.all(peak >= others - 1e-12)


@given(unit_vectors)
def test_parity(d):
    y = sh_basis(d, 6)
    ym = sh_basis(-d, 6)
    bands = np.concatenate([np.full(2 * l + 1, l) for l in range(7)])
    np.testing.assert_allclose(ym, (-1.0) ** bands * y, atol=1e-12)


@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**31))
def test_projection_linear(a, b, seed):
    rng = np.random.default_rng(seed)
    d = random_unit(rng, 64)
    f, g = rng.normal(size=(64, 3)), rng.normal(size=(64, 3))
    w = np.full(64, 4 * math.pi / 64)
    lhs = project_sphere_fn(d, a * f + b * g, w, 3).values
    rhs = a * project_sphere_fn(d, f, w, 3).values + b * project_sphere_fn(d, g, w, 3).values
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)
