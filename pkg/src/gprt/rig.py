"""Guide-mesh rigging: three-bone LBS, triangle anchoring, rigid gaze.

Bones are ordered (head, neck, shoulder).  The neck rotation is relative to
the head, so the head and shoulder transforms are the identity and only the
neck bone rotates, about the pivot stored with the mesh.

Triangle tangent frame: ``e1 = normalize(v1 - v0)``, ``n = normalize((v1 - v0) x (v2 - v0))``,
``b = n x e1``; frame matrix columns are ``[e1, b, n]``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from gprt.errors import AmbiguousAxisError, InvalidInputError
from gprt.splat_core import Gaussians, quat_multiply, rotmat_to_quat

BONES = ("head", "neck", "shoulder")
DEGENERATE_AREA = 1e-14


def vertex_normals(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Area-weighted vertex normals."""
    v0, v1, v2 = (vertices[triangles[:, i]] for i in range(3))
    face = np.cross(v1 - v0, v2 - v0)
    normals = np.zeros_like(vertices)
    for i in range(3):
        np.add.at(normals, triangles[:, i], face)
    norm = np.linalg.norm(normals, axis=1, keepdims=True)
    return normals / np.where(norm > 0, norm, 1.0)


@dataclass
class GuideMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    skin_weights: np.ndarray
    neck_pivot: np.ndarray = field(default_factory=lambda: np.zeros(3))
    eye_centers: np.ndarray = field(default_factory=lambda: np.zeros((2, 3)))
    rest_normals: np.ndarray | None = None

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        self.skin_weights = np.asarray(self.skin_weights, dtype=np.float64).reshape(-1, len(BONES))
        self.neck_pivot = np.asarray(self.neck_pivot, dtype=np.float64).reshape(3)
        self.eye_centers = np.asarray(self.eye_centers, dtype=np.float64).reshape(2, 3)
        nv = len(self.vertices)
        if len(self.skin_weights) != nv:
            raise InvalidInputError("need one skin-weight row per vertex")
        if np.any(self.skin_weights < 0) or np.any(np.abs(self.skin_weights.sum(axis=1) - 1.0) > 1e-6):
            raise InvalidInputError("skin weights must be non-negative and sum to 1")
        if self.triangles.size and (self.triangles.min() < 0 or self.triangles.max() >= nv):
            raise InvalidInputError("triangle index out of range")
        if self.rest_normals is None:
            self.rest_normals = vertex_normals(self.vertices, self.triangles)
        self.rest_normals = np.asarray(self.rest_normals, dtype=np.float64).reshape(nv, 3)


@dataclass
class RigPose:
    gaze_left: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    gaze_right: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    neck_rotation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.gaze_left = np.asarray(self.gaze_left, dtype=np.float64).reshape(3)
        self.gaze_right = np.asarray(self.gaze_right, dtype=np.float64).reshape(3)
        self.neck_rotation = np.asarray(self.neck_rotation, dtype=np.float64).reshape(3)
        for g in (self.gaze_left, self.gaze_right):
            if abs(np.linalg.norm(g) - 1.0) > 1e-6:
                raise InvalidInputError("gaze vectors must be unit length")

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("gaze_left", "gaze_right", "neck_rotation")}


@dataclass
class Anchors:
    """Per-Gaussian triangle index, barycentrics and tangent-frame offset."""

    triangle: np.ndarray
    barycentric: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        self.triangle = np.asarray(self.triangle, dtype=np.int64).reshape(-1)
        self.barycentric = np.asarray(self.barycentric, dtype=np.float64).reshape(-1, 3)
        self.offset = np.asarray(self.offset, dtype=np.float64).reshape(-1, 3)
        if not (len(self.triangle) == len(self.barycentric) == len(self.offset)):
            raise InvalidInputError("anchor arrays must have equal length")
        b = self.barycentric
        if np.any(b < -1e-9) or np.any(np.abs(b.sum(axis=1) - 1.0) > 1e-6):
            raise InvalidInputError("barycentric coordinates must be >= 0 and sum to 1")

    def __len__(self) -> int:
        return len(self.triangle)


def axis_angle_matrix(rotvec) -> np.ndarray:
    return Rotation.from_rotvec(np.asarray(rotvec, dtype=np.float64)).as_matrix()


def lbs_apply(mesh: GuideMesh, pose: RigPose) -> tuple[np.ndarray, np.ndarray]:
    """Posed vertices and unit normals under the blended bone transforms."""
    rot = axis_angle_matrix(pose.neck_rotation)
    p = mesh.neck_pivot
    w_neck = mesh.skin_weights[:, 1:2]
    w_rest = 1.0 - w_neck
    rel = mesh.vertices - p
    # written as a displacement so a zero rotation leaves vertices bit-exact
    verts = mesh.vertices + w_neck * (rel @ rot.T - rel)
    blended = w_rest[:, :, None] * np.eye(3) + w_neck[:, :, None] * rot
    normals = np.einsum("vij,vj->vi", blended, mesh.rest_normals)
    norm = np.linalg.norm(normals, axis=1, keepdims=True)
    normals = normals / np.where(norm > 0, norm, 1.0)
    return verts, normals


def triangle_frames(vertices: np.ndarray, triangles: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Tangent frames ``(T, 3, 3)`` with columns [e1, b, n], and a validity mask."""
    v0, v1, v2 = (vertices[triangles[:, i]] for i in range(3))
    e1 = v1 - v0
    nrm = np.cross(e1, v2 - v0)
    len_e1 = np.linalg.norm(e1, axis=1, keepdims=True)
    len_n = np.linalg.norm(nrm, axis=1, keepdims=True)
    ok = (len_n[:, 0] > DEGENERATE_AREA) & (len_e1[:, 0] > 0)
    e1 = e1 / np.where(len_e1 > 0, len_e1, 1.0)
    nrm = nrm / np.where(len_n > 0, len_n, 1.0)
    b = np.cross(nrm, e1)
    return np.stack([e1, b, nrm], axis=2), ok


@dataclass
class AnchoredGaussians:
    gaussians: Gaussians
    normals: np.ndarray
    # False where the anchor triangle is degenerate; those splats are dropped
    valid: np.ndarray


def anchor_gaussians(
    rest_vertices: np.ndarray,
    posed_vertices: np.ndarray,
    posed_normals: np.ndarray,
    triangles: np.ndarray,
    anchors: Anchors,
    rotations: np.ndarray,
    scales: np.ndarray,
    opacities: np.ndarray,
) -> AnchoredGaussians:
    """World-space Gaussians from mesh anchors.

    ``rotations`` are expressed in the rest-pose world frame; each is composed
    with its triangle's rest-to-posed frame rotation.  Offsets live in the posed
    triangle's tangent frame.
    """
    tri = triangles[anchors.triangle]
    rest_f, rest_ok = triangle_frames(rest_vertices, tri)
    posed_f, posed_ok = triangle_frames(posed_vertices, tri)
    valid = rest_ok & posed_ok
    if not np.all(valid):
        warnings.warn(f"skipping {int((~valid).sum())} Gaussians anchored on degenerate triangles",
                      RuntimeWarning, stacklevel=2)
    bary = anchors.barycentric[valid]
    corners = posed_vertices[tri[valid]]
    surface = np.einsum("kj,kji->ki", bary, corners)
    frames = posed_f[valid]
    positions = surface + np.einsum("kij,kj->ki", frames, anchors.offset[valid])
    delta = frames @ np.swapaxes(rest_f[valid], 1, 2)
    quats = quat_multiply(rotmat_to_quat(delta), rotations[valid])
    quats /= np.linalg.norm(quats, axis=1, keepdims=True)
    normals = np.einsum("kj,kji->ki", bary, posed_normals[tri[valid]])
    norm = np.linalg.norm(normals, axis=1, keepdims=True)
    face_n = frames[:, :, 2]
    normals = np.where(norm > 1e-12, normals / np.where(norm > 0, norm, 1.0), face_n)
    g = Gaussians(positions, quats, scales[valid], opacities[valid])
    return AnchoredGaussians(g, normals, valid)


def minimal_rotation(src, dst) -> np.ndarray:
    """Smallest rotation matrix taking unit ``src`` onto unit ``dst``."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    for v in (src, dst):
        if abs(np.linalg.norm(v) - 1.0) > 1e-6:
            raise InvalidInputError("gaze vectors must be unit length")
    axis = np.cross(src, dst)
    s = np.linalg.norm(axis)
    c = float(np.dot(src, dst))
    if s < 1e-9:
        if c > 0:
            return np.eye(3)
        raise AmbiguousAxisError("gaze is antiparallel to the rest gaze; rotation axis is ambiguous")
    return axis_angle_matrix(axis / s * np.arctan2(s, c))


def apply_gaze(gaussians: Gaussians, normals: np.ndarray | None, center, gaze, rest_gaze):
    """Rigidly rotate eye Gaussians about ``center`` so ``rest_gaze`` maps to ``gaze``."""
    rot = minimal_rotation(rest_gaze, gaze)
    center = np.asarray(center, dtype=np.float64)
    pos = (gaussians.positions - center) @ rot.T + center
    quats = quat_multiply(rotmat_to_quat(rot), gaussians.rotations)
    quats /= np.linalg.norm(quats, axis=1, keepdims=True)
    out = Gaussians(pos, quats, gaussians.scales, gaussians.opacities)
    return out, (None if normals is None else normals @ rot.T)


def write_obj(path, vertices: np.ndarray, triangles: np.ndarray) -> None:
    lines = [f"v {x:.9g} {y:.9g} {z:.9g}" for x, y, z in vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in triangles]
    Path(path).write_text("\n".join(lines) + "\n")


def read_obj(path) -> tuple[np.ndarray, np.ndarray]:
    verts, faces = [], []
    try:
        for line in Path(path).read_text().splitlines():
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(t) for t in parts[1:4]])
            elif parts[0] == "f":
                idx = [int(t.split("/")[0]) - 1 for t in parts[1:]]
                for i in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[i], idx[i + 1]])
    except ValueError as exc:
        raise InvalidInputError(f"{path}: malformed OBJ: {exc}") from exc
    return np.asarray(verts, dtype=np.float64).reshape(-1, 3), np.asarray(faces, dtype=np.int64).reshape(-1, 3)


def save_mesh(mesh: GuideMesh, obj_path, sidecar_path, extra: dict | None = None) -> None:
    """OBJ geometry plus a JSON sidecar with rig data."""
    write_obj(obj_path, mesh.vertices, mesh.triangles)
    side = {
        "bones": list(BONES),
        "skin_weights": mesh.skin_weights.tolist(),
        "neck_pivot": mesh.neck_pivot.tolist(),
        "eye_centers": mesh.eye_centers.tolist(),
        "rest_normals": mesh.rest_normals.tolist(),
    }
    side.update(extra or {})
    Path(sidecar_path).write_text(json.dumps(side))


def load_mesh(obj_path, sidecar_path) -> tuple[GuideMesh, dict]:
    verts, tris = read_obj(obj_path)
    try:
        side = json.loads(Path(sidecar_path).read_text())
        mesh = GuideMesh(verts, tris, side["skin_weights"], side["neck_pivot"],
                         side["eye_centers"], side.get("rest_normals"))
    except (KeyError, ValueError, TypeError) as exc:
        raise InvalidInputError(f"{sidecar_path}: malformed rig sidecar: {exc}") from exc
    return mesh, side
