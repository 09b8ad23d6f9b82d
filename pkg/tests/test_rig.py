import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.spatial.transform import Rotation

from conftest import random_unit
from gprt.avatar import EYE_NONE, pose_avatar
from gprt.errors import AmbiguousAxisError, InvalidInputError
from gprt.rig import (Anchors, GuideMesh, RigPose, anchor_gaussians, apply_gaze, lbs_apply,
                      load_mesh, minimal_rotation, read_obj, save_mesh, triangle_frames, write_obj)
from gprt.splat_core import Gaussians, quat_to_rotmat

seeds = st.integers(0, 2**31)
PIVOT = np.array([0.1, -0.2, 0.05])


def mesh_with_weights(weights, seed=0):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(len(weights), 3))
    tris = np.array([[i, i + 1, i + 2] for i in range(len(weights) - 2)])
    return GuideMesh(v, tris, weights, PIVOT)


def test_zero_rotation_is_identity():
    m = mesh_with_weights(np.tile([0.2, 0.5, 0.3], (6, 1)))
    v, n = lbs_apply(m, RigPose())
    assert np.array_equal(v, m.vertices)
    np.testing.assert_allclose(n, m.rest_normals, atol=1e-15)


def test_neck_vertex_closed_form():
    m = mesh_with_weights(np.tile([0.0, 1.0, 0.0], (5, 1)))
    v, _ = lbs_apply(m, RigPose(neck_rotation=[0, 0, math.pi / 2]))
    rz = np.array([[0, -1, 0], [1, 0, 0], [0, 0, 1.0]])
    np.testing.assert_allclose(v, (m.vertices - PIVOT) @ rz.T + PIVOT, atol=1e-12)


def test_half_weight_blend():
    m = mesh_with_weights(np.tile([0.5, 0.5, 0.0], (5, 1)))
    rot = Rotation.from_rotvec([0.3, -0.4, 0.2]).as_matrix()
    v, _ = lbs_apply(m, RigPose(neck_rotation=[0.3, -0.4, 0.2]))
    np.testing.assert_allclose(v, (m.vertices - PIVOT) @ (0.5 * np.eye(3) + 0.5 * rot).T + PIVOT, atol=1e-12)


@given(st.tuples(*[st.floats(-3, 3)] * 3))
def test_head_weights_never_move(rotvec):
    m = mesh_with_weights(np.tile([1.0, 0.0, 0.0], (5, 1)))
    v, _ = lbs_apply(m, RigPose(neck_rotation=rotvec))
    np.testing.assert_array_equal(v, m.vertices)


def test_mesh_validation():
    with pytest.raises(InvalidInputError):
        mesh_with_weights(np.tile([0.5, 0.6, 0.0], (4, 1)))
    with pytest.raises(InvalidInputError):
        GuideMesh(np.zeros((3, 3)), [[0, 1, 3]], np.tile([1.0, 0, 0], (3, 1)))
    with pytest.raises(InvalidInputError):
        Anchors([0], [[0.5, 0.6, 0.0]], [[0, 0, 0]])
    with pytest.raises(InvalidInputError):
        RigPose(gaze_left=[0, 0, 2])


def _surface_setup(rng, k=40):
    m = mesh_with_weights(np.tile([1.0, 0, 0], (12, 1)), seed=int(rng.integers(1 << 30)))
    bary = rng.dirichlet([1, 1, 1], k)
    anchors = Anchors(rng.integers(0, len(m.triangles), k), bary, rng.normal(0, 0.01, (k, 3)))
    q = rng.normal(size=(k, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    return m, anchors, q, rng.uniform(0.01, 0.02, (k, 3)), rng.uniform(0.5, 1, k)


def test_anchor_at_rest_is_surface_point():
    rng = np.random.default_rng(0)
    m, a, q, s, o = _surface_setup(rng)
    a = Anchors(a.triangle, a.barycentric, np.zeros_like(a.offset))
    out = anchor_gaussians(m.vertices, m.vertices, m.rest_normals, m.triangles, a, q, s, o)
    surface = np.einsum("kj,kji->ki", a.barycentric, m.vertices[m.triangles[a.triangle]])
    np.testing.assert_allclose(out.gaussians.positions, surface, atol=1e-12)
    np.testing.assert_allclose(out.gaussians.rotations, q, atol=1e-12)


@given(seeds)
def test_anchor_rigid_equivariance(seed):
    rng = np.random.default_rng(seed)
    m, a, q, s, o = _surface_setup(rng)
    r = Rotation.random(random_state=seed % (2**32 - 1)).as_matrix()
    t = rng.normal(size=3)
    rest = anchor_gaussians(m.vertices, m.vertices, m.rest_normals, m.triangles, a, q, s, o)
    moved = anchor_gaussians(m.vertices, m.vertices @ r.T + t, m.rest_normals @ r.T, m.triangles, a, q, s, o)
    np.testing.assert_allclose(moved.gaussians.positions, rest.gaussians.positions @ r.T + t, atol=1e-6)
    np.testing.assert_allclose(moved.normals, rest.normals @ r.T, atol=1e-6)
    np.testing.assert_allclose(quat_to_rotmat(moved.gaussians.rotations),
                               r @ quat_to_rotmat(rest.gaussians.rotations), atol=1e-6)


def test_rigid_90_degree_pose():
    rng = np.random.default_rng(5)
    m, a, q, s, o = _surface_setup(rng)
    r = Rotation.from_rotvec([0, math.pi / 2, 0]).as_matrix()
    rest = anchor_gaussians(m.vertices, m.vertices, m.rest_normals, m.triangles, a, q, s, o)
    moved = anchor_gaussians(m.vertices, m.vertices @ r.T, m.rest_normals @ r.T, m.triangles, a, q, s, o)
    np.testing.assert_allclose(moved.gaussians.positions, rest.gaussians.positions @ r.T, atol=1e-6)


@given(seeds, st.floats(-0.05, 0.05))
def test_normal_offset_distance_is_preserved(seed, h):
    rng = np.random.default_rng(seed)
    m, a, q, s, o = _surface_setup(rng)
    a = Anchors(a.triangle, a.barycentric, np.tile([0.0, 0.0, h], (len(a), 1)))
    r = Rotation.random(random_state=seed % (2**32 - 1)).as_matrix()
    posed = m.vertices @ r.T + rng.normal(size=3)
    out = anchor_gaussians(m.vertices, posed, m.rest_normals @ r.T, m.triangles, a, q, s, o)
    surface = np.einsum("kj,kji->ki", a.barycentric, posed[m.triangles[a.triangle]])
    np.testing.assert_allclose(np.linalg.norm(out.gaussians.positions - surface, axis=1), abs(h), atol=1e-6)


def test_degenerate_triangle_is_skipped():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [2, 0, 0.0]])
    m = GuideMesh(v, [[0, 1, 2], [0, 1, 3]], np.tile([1.0, 0, 0], (4, 1)))
    a = Anchors([0, 1], [[1 / 3] * 3] * 2, np.zeros((2, 3)))
    q = np.tile([1.0, 0, 0, 0], (2, 1))
    with pytest.warns(RuntimeWarning):
        out = anchor_gaussians(v, v, m.rest_normals, m.triangles, a, q, np.full((2, 3), 0.1), np.ones(2))
    assert out.valid.tolist() == [True, False] and len(out.gaussians) == 1


def test_triangle_frames_orthonormal():
    rng = np.random.default_rng(2)
    v = rng.normal(size=(30, 3))
    f, ok = triangle_frames(v, np.arange(30).reshape(10, 3))
    assert ok.all()
    np.testing.assert_allclose(np.swapaxes(f, 1, 2) @ f, np.broadcast_to(np.eye(3), f.shape), atol=1e-12)
    np.testing.assert_allclose(np.linalg.det(f), 1.0)


def _eye_splats(rng, k=20):
    q = rng.normal(size=(k, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    return Gaussians(rng.normal(size=(k, 3)), q, np.full((k, 3), 0.01), np.ones(k))


def test_gaze_identity_and_antiparallel():
    rng = np.random.default_rng(0)
    g = _eye_splats(rng)
    rest = np.array([0.0, 0.0, 1.0])
    same, _ = apply_gaze(g, None, [0.1, 0, 0], rest, rest)
    np.testing.assert_allclose(same.positions, g.positions, atol=1e-15)
    with pytest.raises(AmbiguousAxisError):
        apply_gaze(g, None, [0, 0, 0], -rest, rest)


@given(seeds)
def test_gaze_rigid_and_invertible(seed):
    rng = np.random.default_rng(seed)
    g = _eye_splats(rng)
    center = rng.normal(size=3)
    rest, gaze = np.array([0.0, 0.0, 1.0]), random_unit(rng)
    if gaze @ rest < -0.99:
        gaze = -gaze
    out, _ = apply_gaze(g, None, center, gaze, rest)
    np.testing.assert_allclose(np.linalg.norm(out.positions - center, axis=1),
                               np.linalg.norm(g.positions - center, axis=1), atol=1e-12)
    back, _ = apply_gaze(out, None, center, rest, gaze)
    np.testing.assert_allclose(back.positions, g.positions, atol=1e-6)
    np.testing.assert_allclose(minimal_rotation(rest, gaze) @ rest, gaze, atol=1e-12)


def test_obj_and_sidecar_round_trip(tmp_path):
    m = mesh_with_weights(np.tile([0.2, 0.5, 0.3], (6, 1)))
    write_obj(tmp_path / "m.obj", m.vertices, m.triangles)
    v, t = read_obj(tmp_path / "m.obj")
    np.testing.assert_allclose(v, m.vertices, rtol=1e-8)
    assert np.array_equal(t, m.triangles)
    save_mesh(m, tmp_path / "a.obj", tmp_path / "a.json", {"note": 1})
    back, side = load_mesh(tmp_path / "a.obj", tmp_path / "a.json")
    np.testing.assert_allclose(back.skin_weights, m.skin_weights)
    np.testing.assert_allclose(back.neck_pivot, PIVOT)
    assert side["note"] == 1


def test_toy_head_gaze_moves_only_eyes(toy_head):
    rest = pose_avatar(toy_head)
    g = np.array([0.3, 0.1, 1.0])
    g /= np.linalg.norm(g)
    looked = pose_avatar(toy_head, RigPose(g, g))
    labels = toy_head.eye_label[rest.index]
    moved = np.any(np.abs(looked.gaussians.positions - rest.gaussians.positions) > 1e-12, axis=1)
    assert not moved[labels == EYE_NONE].any()
    assert moved[labels != EYE_NONE].any()


def test_toy_head_neck_rotation_moves_lower_vertices(toy_head):
    v, _ = lbs_apply(toy_head.mesh, RigPose(neck_rotation=[0.0, 0.4, 0.0]))
    disp = np.linalg.norm(v - toy_head.mesh.vertices, axis=1)
    w_neck = toy_head.mesh.skin_weights[:, 1]
    assert np.all(disp[w_neck == 0] == 0) and np.median(disp[w_neck > 0.5]) > 1e-3
