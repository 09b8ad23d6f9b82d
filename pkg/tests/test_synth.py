import numpy as np
import pytest

from conftest import random_unit
from gprt.avatar import pose_avatar, save_avatar
from gprt.errors import InvalidInputError
from gprt.lighting import EnvMap, PointLightSet, random_smooth_envmap, uniform_lights
from gprt.render import render_avatar
from gprt.shading import shade_for_view
from gprt.synth import (dataset_avatar, load_dataset, make_toy_head, olat_frames, orbit_cameras,
                        quadrature_shade, render_frames, render_olat_dataset)


def test_toy_head_is_deterministic(tmp_path):
    save_avatar(make_toy_head(300, seed=4), tmp_path / "a")
    save_avatar(make_toy_head(300, seed=4), tmp_path / "b")
    for f in ("avatar.bin", "avatar.json", "mesh.obj", "rig.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_toy_head_counts_and_errors():
    av = make_toy_head(1000, seed=0)
    assert len(av) == 1000 and len(av.transfer) == 1000
    assert len(pose_avatar(av).gaussians) == 1000
    with pytest.raises(InvalidInputError):
        make_toy_head(5)


def test_toy_head_lambertian_identity(toy_head):
    posed = pose_avatar(toy_head)
    tp = posed.transfer.replace(visibility=np.zeros(len(posed.transfer)))
    out = shade_for_view(tp, posed.gaussians.positions, posed.normals, np.array([0, 0, 5.0]), uniform_lights(1.0))
    np.testing.assert_allclose(out, tp.albedo, rtol=0.02)


def test_single_frame_matches_direct_render(small_rig):
    avatar, cams = small_rig
    light = uniform_lights(0.8)
    images, alphas, _ = render_frames(avatar, [light], cams[:2])
    for c, cam in enumerate(cams[:2]):
        direct = render_avatar(avatar, light, cam).target
        assert np.array_equal(images[0, c], direct.rgb)
        assert np.array_equal(alphas[c], direct.alpha)


def test_two_light_frame_is_sum_preclamp(small_rig):
    avatar, cams = small_rig
    f = olat_frames(8)
    both = PointLightSet(np.concatenate([f[1].directions, f[5].directions]),
                         np.concatenate([f[1].intensities, f[5].intensities]), f[1].solid_angle)
    _, _, pre = render_frames(avatar, [f[1], f[5], both], cams[:1])
    np.testing.assert_allclose(pre[2], pre[0] + pre[1], atol=1e-5)


def test_grouped_frames():
    frames = olat_frames(16, group=5, seed=2)
    assert len(frames) == 16 and all(len(f) == 5 for f in frames)
    assert [f.directions.tolist() for f in frames] == [f.directions.tolist() for f in olat_frames(16, group=5, seed=2)]


def test_dataset_round_trip(tmp_path, small_rig):
    avatar, cams = small_rig
    save_avatar(avatar, tmp_path / "avatar")
    ds = render_olat_dataset(avatar, olat_frames(3), cams[:2], seed=7, out_dir=tmp_path, avatar_path="avatar")
    back = load_dataset(tmp_path)
    np.testing.assert_array_equal(back.images, ds.images.astype(np.float32))
    np.testing.assert_array_equal(back.masks, ds.masks.astype(np.float32))
    assert back.seed == 7 and back.kind == "olat"
    assert back.manifest() == ds.manifest()
    for a, b in zip(back.frames, ds.frames):
        assert np.array_equal(a.intensities, b.intensities) and a.solid_angle == b.solid_angle
    assert len(dataset_avatar(back, tmp_path)) == len(avatar)


def test_dataset_errors(tmp_path):
    with pytest.raises(InvalidInputError):
        load_dataset(tmp_path)
    (tmp_path / "manifest.json").write_text('{"format": "other"}')
    with pytest.raises(InvalidInputError):
        load_dataset(tmp_path)


def test_orbit_cameras_look_at_head():
    for cam in orbit_cameras(6, resolution=40):
        assert cam.width == 40
        p = cam.rotation @ np.array([0.0, -0.02, 0.0]) + cam.translation
        assert p[2] > 0 and abs(cam.fx * p[0] / p[2]) < 1e-9


def test_quadrature_uniform_lambertian():
    n = random_unit(np.random.default_rng(0), 10)
    out = quadrature_shade(n, [0.5, 0.3, 0.8], EnvMap.constant([1.0, 1.0, 1.0], 512))
    np.testing.assert_allclose(out, np.broadcast_to([0.5, 0.3, 0.8], (10, 3)), rtol=0.005)


def test_quadrature_zero_linear_and_refinement():
    rng = np.random.default_rng(1)
    n, wo = random_unit(rng, 6), random_unit(rng, 6)
    env = random_smooth_envmap(rng, 128)
    assert not quadrature_shade(n, 0.5, EnvMap.constant([0.0, 0.0, 0.0], 64), grid_height=64).any()
    a = quadrature_shade(n, 0.5, env, wo, 0.5, 0.3, grid_height=128)
    b = quadrature_shade(n, 0.5, env.scaled(2.0), wo, 0.5, 0.3, grid_height=128)
    assert np.array_equal(b, 2 * a)
    fine = quadrature_shade(n, 0.5, env, wo, 0.5, 0.3, grid_height=256)
    np.testing.assert_allclose(fine, a, rtol=0.005)
    with pytest.raises(InvalidInputError):
        quadrature_shade(n, 0.5, env, None, 0.5, 0.3, grid_height=64)
