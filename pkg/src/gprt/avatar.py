"""Rigged relightable avatar: guide mesh, anchored Gaussians, transfer, and its file format.

On disk an avatar is a directory holding

* ``avatar.json``   manifest: version, counts, SH orders, rig references, blob layout
* ``avatar.bin``    little-endian float32 arrays, concatenated in manifest order
* ``mesh.obj``      rest-pose guide mesh
* ``rig.json``      skin weights, neck pivot, eyeball centres, anchors
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from gprt.errors import InvalidInputError
from gprt.rig import (Anchors, GuideMesh, RigPose, anchor_gaussians, apply_gaze, lbs_apply,
                      load_mesh, save_mesh)
from gprt.shading import N_COLOR_COEFFS, TransferParams
from gprt.splat_core import Gaussians

FORMAT_NAME = "gprt-avatar"
FORMAT_VERSION = "1.0"
EYE_NONE, EYE_LEFT, EYE_RIGHT = 0, 1, 2


@dataclass
class Avatar:
    mesh: GuideMesh
    anchors: Anchors
    rotations: np.ndarray
    scales: np.ndarray
    opacities: np.ndarray
    transfer: TransferParams
    eye_label: np.ndarray
    rest_gaze: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        k = len(self.anchors)
        self.rotations = np.asarray(self.rotations, dtype=np.float64).reshape(k, 4)
        self.scales = np.asarray(self.scales, dtype=np.float64).reshape(k, 3)
        self.opacities = np.asarray(self.opacities, dtype=np.float64).reshape(k)
        self.eye_label = np.asarray(self.eye_label, dtype=np.int64).reshape(k)
        self.rest_gaze = np.asarray(self.rest_gaze, dtype=np.float64).reshape(3)
        if len(self.transfer) != k:
            raise InvalidInputError("transfer rows must match the Gaussian count")
        # validates quaternion norms, scales, opacities
        Gaussians(np.zeros((k, 3)), self.rotations, self.scales, self.opacities)

    def __len__(self) -> int:
        return len(self.anchors)


@dataclass
class PosedAvatar:
    gaussians: Gaussians
    normals: np.ndarray
    transfer: TransferParams
    # indices into the avatar's Gaussians that survived anchoring
    index: np.ndarray


def pose_avatar(avatar: Avatar, pose: RigPose | None = None) -> PosedAvatar:
    pose = pose or RigPose(avatar.rest_gaze, avatar.rest_gaze)
    mesh = avatar.mesh
    verts, normals = lbs_apply(mesh, pose)
    anchored = anchor_gaussians(mesh.vertices, verts, normals, mesh.triangles, avatar.anchors,
                                avatar.rotations, avatar.scales, avatar.opacities)
    index = np.flatnonzero(anchored.valid)
    g, n = anchored.gaussians, anchored.normals
    labels = avatar.eye_label[index]
    for label, center, gaze in ((EYE_LEFT, mesh.eye_centers[0], pose.gaze_left),
                                (EYE_RIGHT, mesh.eye_centers[1], pose.gaze_right)):
        sel = labels == label
        if not np.any(sel):
            continue
        eye_g, eye_n = apply_gaze(g.subset(sel), n[sel], center, gaze, avatar.rest_gaze)
        pos, rot, nrm = g.positions.copy(), g.rotations.copy(), n.copy()
        pos[sel], rot[sel], nrm[sel] = eye_g.positions, eye_g.rotations, eye_n
        g = Gaussians(pos, rot, g.scales, g.opacities)
        n = nrm
    return PosedAvatar(g, n, avatar.transfer.subset(index), index)


_BLOB_FIELDS = (
    ("rotations", lambda a: a.rotations),
    ("scales", lambda a: a.scales),
    ("opacities", lambda a: a.opacities),
    ("eye_label", lambda a: a.eye_label),
    ("albedo", lambda a: a.transfer.albedo),
    ("d_color", lambda a: a.transfer.d_color),
    ("d_mono", lambda a: a.transfer.d_mono),
    ("roughness", lambda a: a.transfer.roughness),
    ("visibility", lambda a: a.transfer.visibility),
    ("normal_offset", lambda a: a.transfer.normal_offset),
)


def save_avatar(avatar: Avatar, directory) -> Path:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    arrays, offset, blob = [], 0, bytearray()
    for name, get in _BLOB_FIELDS:
        data = np.ascontiguousarray(get(avatar), dtype="<f4")
        arrays.append({"name": name, "shape": list(data.shape), "offset": offset, "count": int(data.size)})
        blob += data.tobytes()
        offset += data.size
    (out / "avatar.bin").write_bytes(bytes(blob))
    extra = {
        "anchors": {
            "triangle": avatar.anchors.triangle.tolist(),
            "barycentric": avatar.anchors.barycentric.tolist(),
            "offset": avatar.anchors.offset.tolist(),
        },
        "rest_gaze": avatar.rest_gaze.tolist(),
    }
    save_mesh(avatar.mesh, out / "mesh.obj", out / "rig.json", extra)
    manifest = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "counts": {
            "gaussians": len(avatar),
            "vertices": len(avatar.mesh.vertices),
            "triangles": len(avatar.mesh.triangles),
        },
        "sh_order": avatar.transfer.order,
        "n_color_coeffs": N_COLOR_COEFFS,
        "n_mono_coeffs": int(avatar.transfer.d_mono.shape[1]),
        "rig": {"mesh": "mesh.obj", "sidecar": "rig.json"},
        "blob": {"file": "avatar.bin", "dtype": "float32-le", "arrays": arrays},
        "metadata": avatar.metadata,
    }
    (out / "avatar.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return out / "avatar.json"


def load_avatar(path) -> Avatar:
    """Load from an avatar directory or its ``avatar.json``."""
    path = Path(path)
    manifest_path = path / "avatar.json" if path.is_dir() else path
    root = manifest_path.parent
    try:
        manifest = json.loads(manifest_path.read_text())
    except (OSError, ValueError) as exc:
        raise InvalidInputError(f"{manifest_path}: cannot read avatar manifest: {exc}") from exc
    if manifest.get("format") != FORMAT_NAME or "version" not in manifest:
        raise InvalidInputError(f"{manifest_path}: not a {FORMAT_NAME} manifest")
    try:
        k = int(manifest["counts"]["gaussians"])
        blob_info = manifest["blob"]
        raw = np.frombuffer((root / blob_info["file"]).read_bytes(), dtype="<f4")
        total = sum(a["count"] for a in blob_info["arrays"])
        if raw.size != total:
            raise InvalidInputError(f"{manifest_path}: blob holds {raw.size} floats, manifest expects {total}")
        arrays = {}
        for a in blob_info["arrays"]:
            if a["shape"] and a["shape"][0] != k:
                raise InvalidInputError(f"{manifest_path}: array {a['name']} does not match count {k}")
            arrays[a["name"]] = raw[a["offset"]:a["offset"] + a["count"]].astype(np.float64).reshape(a["shape"])
        mesh, side = load_mesh(root / manifest["rig"]["mesh"], root / manifest["rig"]["sidecar"])
        anchors = Anchors(**side["anchors"])
        rot = arrays["rotations"]
        rot = rot / np.linalg.norm(rot, axis=1, keepdims=True)
        transfer = TransferParams(
            np.clip(arrays["albedo"], 0.0, 1.0), arrays["d_color"], arrays["d_mono"],
            np.clip(arrays["roughness"], 1e-6, 1.0), np.clip(arrays["visibility"], 0.0, 1.0),
            arrays["normal_offset"],
        )
        return Avatar(mesh, anchors, rot, arrays["scales"], np.clip(arrays["opacities"], 0.0, 1.0),
                      transfer, np.rint(arrays["eye_label"]).astype(np.int64),
                      side.get("rest_gaze", [0.0, 0.0, 1.0]), manifest.get("metadata", {}))
    except InvalidInputError:
        raise
    except (OSError, KeyError, ValueError, TypeError) as exc:
        raise InvalidInputError(f"{manifest_path}: malformed avatar: {exc}") from exc
