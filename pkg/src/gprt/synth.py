"""Synthetic ground truth: a toy relightable head, OLAT render sets, and a
dense-quadrature shader used as the reference for the SH/SG approximations."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from gprt.avatar import EYE_LEFT, EYE_NONE, EYE_RIGHT, Avatar, load_avatar, pose_avatar
from gprt.errors import InvalidInputError
from gprt.imageio import read_pfm, write_pfm
from gprt.lighting import N_ENV_LIGHTS, EnvMap, PointLightSet, fibonacci_directions, latlong_grid
from gprt.rig import Anchors, GuideMesh, RigPose, triangle_frames
from gprt.shading import ShadingConfig, TransferParams, reflect, shade_for_view
from gprt.splat_core import Camera, Gaussians, rasterize, rotmat_to_quat

HEAD_CENTER = np.array([0.0, -0.02, 0.0])
# single-light intensity giving a peak Lambertian response of about rho
OLAT_INTENSITY = math.pi / (4 * math.pi / N_ENV_LIGHTS)
DATASET_FORMAT = "gprt-dataset"
_QUAD_CHUNK = 32


def _latlong_surface(center, radii, n_lat, n_lon, noise=None):
    """Closed ellipsoid mesh with optional radial displacement ``noise(theta, phi)``."""
    theta = np.linspace(0.0, math.pi, n_lat + 1)[1:-1]
    phi = np.linspace(0.0, 2 * math.pi, n_lon, endpoint=False)
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    unit = np.stack([np.sin(tt) * np.sin(pp), np.cos(tt), np.sin(tt) * np.cos(pp)], axis=-1)
    scale = 1.0 if noise is None else (1.0 + noise(tt, pp))[..., None]
    ring = (unit * radii * scale).reshape(-1, 3) + center
    top = center + np.array([0.0, radii[1], 0.0])
    bottom = center - np.array([0.0, radii[1], 0.0])
    verts = np.vstack([ring, top, bottom])
    i_top, i_bot = len(ring), len(ring) + 1
    tris = []
    for r in range(n_lat - 2):
        for c in range(n_lon):
            a, b = r * n_lon + c, r * n_lon + (c + 1) % n_lon
            d, e = a + n_lon, b + n_lon
            tris += [[a, d, b], [b, d, e]]
    last = (n_lat - 2) * n_lon
    for c in range(n_lon):
        cn = (c + 1) % n_lon
        tris.append([i_top, c, cn])
        tris.append([i_bot, last + cn, last + c])
    return verts, np.asarray(tris, dtype=np.int64)


def _tube(y0, y1, radius, n_y, n_lon):
    ys = np.linspace(y1, y0, n_y)
    phi = np.linspace(0.0, 2 * math.pi, n_lon, endpoint=False)
    yy, pp = np.meshgrid(ys, phi, indexing="ij")
    verts = np.stack([radius * np.sin(pp), yy, radius * np.cos(pp)], axis=-1).reshape(-1, 3)
    tris = []
    for r in range(n_y - 1):
        for c in range(n_lon):
            a, b = r * n_lon + c, r * n_lon + (c + 1) % n_lon
            d, e = a + n_lon, b + n_lon
            tris += [[a, d, b], [b, d, e]]
    return verts, np.asarray(tris, dtype=np.int64)


def _smoothstep(x, lo, hi):
    t = np.clip((x - lo) / (hi - lo), 0.0, 1.0)
    return t * t * (3 - 2 * t)


def _skin_weights(y: np.ndarray) -> np.ndarray:
    head = _smoothstep(y, -0.08, -0.04)
    shoulder = 1.0 - _smoothstep(y, -0.19, -0.15)
    neck = 1.0 - head - shoulder
    return np.stack([head, neck, shoulder], axis=1)


def make_guide_mesh(rng: np.random.Generator) -> GuideMesh:
    freqs = rng.integers(1, 4, size=(4, 2))
    phases = rng.uniform(0, 2 * math.pi, size=(4, 2))
    amps = rng.uniform(0.004, 0.012, size=4)

    def noise(t, p):
        return sum(a * np.sin(f[0] * t + ph[0]) * np.cos(f[1] * p + ph[1])
                   for a, f, ph in zip(amps, freqs, phases))

    parts = [
        _latlong_surface(np.array([0.0, 0.02, 0.0]), np.array([0.080, 0.105, 0.095]), 24, 48, noise),
        _tube(-0.17, -0.05, 0.045, 7, 32),
        _latlong_surface(np.array([0.0, -0.215, 0.0]), np.array([0.19, 0.05, 0.10]), 12, 48),
    ]
    verts, tris, base = [], [], 0
    for v, t in parts:
        verts.append(v)
        tris.append(t + base)
        base += len(v)
    verts = np.vstack(verts)
    eye_z = 0.095 * math.sqrt(1 - (0.032 / 0.080) ** 2 - (0.01 / 0.105) ** 2) - 0.012
    eyes = np.array([[0.032, 0.03, eye_z], [-0.032, 0.03, eye_z]])
    return GuideMesh(verts, np.vstack(tris), _skin_weights(verts[:, 1]), np.array([0.0, -0.12, 0.0]), eyes)


def make_toy_head(n_gaussians: int = 2000, seed: int = 0, sh_order: int = 3) -> Avatar:
    """Deterministic toy head with Lambertian diffuse transfer about each surface normal."""
    if n_gaussians < 10:
        raise InvalidInputError("need at least 10 Gaussians")
    rng = np.random.default_rng(seed)
    mesh = make_guide_mesh(rng)
    frames, ok = triangle_frames(mesh.vertices, mesh.triangles)
    v0, v1, v2 = (mesh.vertices[mesh.triangles[:, i]] for i in range(3))
    area = 0.5 * np.linalg.norm(np.cross(v1 - v0, v2 - v0), axis=1) * ok
    tri = rng.choice(len(area), size=n_gaussians, p=area / area.sum())
    r1, r2 = rng.uniform(size=n_gaussians), rng.uniform(size=n_gaussians)
    s1 = np.sqrt(r1)
    bary = np.stack([1 - s1, s1 * (1 - r2), s1 * r2], axis=1)
    offset = np.zeros((n_gaussians, 3))
    offset[:, 2] = rng.normal(0.0, 0.001, n_gaussians)
    anchors = Anchors(tri, bary, offset)

    spacing = math.sqrt(area.sum() / n_gaussians)
    tangent = spacing * rng.uniform(0.8, 1.2, size=(n_gaussians, 2))
    scales = np.column_stack([tangent, 0.15 * tangent.mean(axis=1)])
    rotations = rotmat_to_quat(frames[tri])
    opacities = rng.uniform(0.85, 1.0, n_gaussians)

    surface = np.einsum("kj,kji->ki", bary, mesh.vertices[mesh.triangles[tri]])
    eye_label = np.full(n_gaussians, EYE_NONE)
    eye_label[np.linalg.norm(surface - mesh.eye_centers[0], axis=1) < 0.02] = EYE_LEFT
    eye_label[np.linalg.norm(surface - mesh.eye_centers[1], axis=1) < 0.02] = EYE_RIGHT

    skin = np.array([0.78, 0.56, 0.45])
    albedo = np.clip(skin * rng.uniform(0.8, 1.15, size=(n_gaussians, 1))
                     * rng.uniform(0.95, 1.05, size=(n_gaussians, 3)), 0.0, 1.0)
    placeholder = TransferParams.lambertian(np.tile([0.0, 0.0, 1.0], (n_gaussians, 1)), albedo, sh_order)
    avatar = Avatar(mesh, anchors, rotations, scales, opacities, placeholder, eye_label,
                    metadata={"generator": "toy_head", "seed": seed, "n_gaussians": n_gaussians})
    posed = pose_avatar(avatar)
    normals = np.tile([0.0, 0.0, 1.0], (n_gaussians, 1))
    normals[posed.index] = posed.normals
    avatar.transfer = TransferParams.lambertian(
        normals, albedo, sh_order,
        roughness=rng.uniform(0.25, 0.6, n_gaussians),
        visibility=rng.uniform(0.05, 0.25, n_gaussians),
    )
    return avatar


def orbit_cameras(n: int = 8, distance: float = 0.75, resolution: int = 64, fov_y_deg: float = 36.0,
                  elevations=(0.25, -0.1), target=HEAD_CENTER) -> list[Camera]:
    """Cameras on a ring around the head, alternating between the given elevations."""
    cams = []
    for i in range(n):
        az = 2 * math.pi * i / n
        el = elevations[i % len(elevations)]
        eye = np.asarray(target) + distance * np.array(
            [math.sin(az) * math.cos(el), math.sin(el), math.cos(az) * math.cos(el)])
        cams.append(Camera.look_at(eye, target, fov_y_deg=fov_y_deg, width=resolution, height=resolution))
    return cams


def random_splat_scene(rng: np.random.Generator, n_gaussians: int = 1000, resolution: int = 512,
                       fov_y_deg: float = 30.0) -> tuple[Gaussians, np.ndarray, Camera]:
    """Random splats filling the view of one camera, with random RGB colors.

    Splat size shrinks as ``1/sqrt(n)`` so the mean overlap per pixel stays
    roughly constant with the Gaussian count.
    """
    pos = rng.uniform(-0.5, 0.5, (n_gaussians, 3))
    q = rng.normal(size=(n_gaussians, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    base = 0.5 / math.sqrt(n_gaussians)
    scales = base * rng.uniform(0.3, 1.5, (n_gaussians, 3))
    g = Gaussians(pos, q, scales, rng.uniform(0.2, 0.95, n_gaussians))
    cam = Camera.look_at([0.0, 0.0, 2.0], [0.0, 0.0, 0.0], fov_y_deg=fov_y_deg,
                         width=resolution, height=resolution)
    return g, rng.uniform(0.0, 1.0, (n_gaussians, 3)), cam


def olat_frames(n_lights: int = 64, intensity=OLAT_INTENSITY, group: int = 1, seed: int = 0,
                solid_angle: float = 4 * math.pi / N_ENV_LIGHTS) -> list[PointLightSet]:
    """Light patterns: single lights on a Fibonacci lattice, or random groups of ``group``."""
    dirs = fibonacci_directions(n_lights)
    rgb = np.broadcast_to(np.asarray(intensity, dtype=np.float64), (3,))
    if group == 1:
        return [PointLightSet(d[None], rgb[None], solid_angle) for d in dirs]
    rng = np.random.default_rng(seed)
    frames = []
    for _ in range(n_lights):
        pick = np.sort(rng.choice(n_lights, size=group, replace=False))
        frames.append(PointLightSet(dirs[pick], np.tile(rgb, (group, 1)), solid_angle))
    return frames


@dataclass
class Dataset:
    """Rendered frames: ``images[f][c]`` is frame f seen by camera c."""

    cameras: list[Camera]
    frames: list[PointLightSet]
    images: np.ndarray
    masks: np.ndarray
    pose: RigPose = field(default_factory=RigPose)
    seed: int = 0
    avatar_path: str | None = None
    kind: str = "olat"

    def manifest(self) -> dict:
        nf, nc = len(self.frames), len(self.cameras)
        return {
            "format": DATASET_FORMAT,
            "version": "1.0",
            "kind": self.kind,
            "seed": self.seed,
            "avatar": self.avatar_path,
            "pose": self.pose.to_dict(),
            "cameras": [c.to_dict() for c in self.cameras],
            "masks": [f"mask_c{c:02d}.pfm" for c in range(nc)],
            "frames": [
                {"lights": self.frames[f].to_dict(),
                 "images": [f"frame_f{f:03d}_c{c:02d}.pfm" for c in range(nc)]}
                for f in range(nf)
            ],
        }

    def save(self, directory) -> Path:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        man = self.manifest()
        for c, name in enumerate(man["masks"]):
            write_pfm(out / name, self.masks[c])
        for f, frame in enumerate(man["frames"]):
            for c, name in enumerate(frame["images"]):
                write_pfm(out / name, self.images[f, c])
        (out / "manifest.json").write_text(json.dumps(man, indent=1))
        return out / "manifest.json"


def load_dataset(directory) -> Dataset:
    root = Path(directory)
    try:
        man = json.loads((root / "manifest.json").read_text())
    except (OSError, ValueError) as exc:
        raise InvalidInputError(f"{root}: cannot read dataset manifest: {exc}") from exc
    if man.get("format") != DATASET_FORMAT:
        raise InvalidInputError(f"{root}: not a {DATASET_FORMAT} manifest")
    try:
        cams = [Camera.from_dict(c) for c in man["cameras"]]
        frames = [PointLightSet.from_dict(f["lights"]) for f in man["frames"]]
        masks = np.stack([read_pfm(root / m) for m in man["masks"]])
        images = np.stack([np.stack([read_pfm(root / p) for p in f["images"]]) for f in man["frames"]])
        pose = RigPose(**man.get("pose", {}))
    except (KeyError, TypeError, ValueError, OSError) as exc:
        raise InvalidInputError(f"{root}: malformed dataset: {exc}") from exc
    avatar_path = man.get("avatar")
    return Dataset(cams, frames, images, masks, pose, man.get("seed", 0), avatar_path, man.get("kind", "olat"))


def dataset_avatar(dataset: Dataset, root) -> Avatar:
    if dataset.avatar_path is None:
        raise InvalidInputError("dataset does not reference an avatar")
    return load_avatar(Path(root) / dataset.avatar_path)


def render_frames(avatar: Avatar, frames: list[PointLightSet], cameras: list[Camera],
                  pose: RigPose | None = None, config: ShadingConfig | None = None,
                  mode: str = "tiled") -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Render every (frame, camera) pair.

    Returns images ``(F, C, H, W, 3)``, alphas ``(C, H, W)`` and pre-clamp colors
    ``(F, C, K, 3)``.  All frames of one camera share a single rasterization
    with stacked color channels.
    """
    posed = pose_avatar(avatar, pose)
    nf, k = len(frames), len(posed.transfer)
    images, alphas, pres = [], [], []
    for cam in cameras:
        pre = np.stack([shade_for_view(posed.transfer, posed.gaussians.positions, posed.normals,
                                       cam.center, fr, config) for fr in frames])
        stacked = np.maximum(pre, 0.0).transpose(1, 0, 2).reshape(k, nf * 3)
        target = rasterize(posed.gaussians, stacked, cam, mode=mode)
        h, w = target.alpha.shape
        images.append(target.rgb.reshape(h, w, nf, 3).transpose(2, 0, 1, 3))
        alphas.append(target.alpha)
        pres.append(pre)
    return np.stack(images, axis=1), np.stack(alphas), np.stack(pres, axis=1)


def render_olat_dataset(avatar: Avatar, frames: list[PointLightSet], cameras: list[Camera],
                        pose: RigPose | None = None, config: ShadingConfig | None = None,
                        seed: int = 0, out_dir=None, avatar_path: str | None = None) -> Dataset:
    images, alphas, _ = render_frames(avatar, frames, cameras, pose, config)
    ds = Dataset(list(cameras), list(frames), images, alphas, pose or RigPose(), seed, avatar_path)
    if out_dir is not None:
        ds.save(out_dir)
    return ds


def quadrature_shade(normals, albedo, env: EnvMap, wo=None, roughness=0.5, visibility=0.0,
                     grid_height: int = 512) -> np.ndarray:
    """Dense Riemann sum of the rendering integral with the exact transfer.

    Transfer is ``rho/pi * max(0, n.w) + v * G(w; reflect(wo, n), 1/sigma^2)``,
    integrated over a ``grid_height x 2*grid_height`` lat-long grid.  Accepts a
    single normal ``(3,)`` or a batch ``(K, 3)``.
    """
    single = np.ndim(normals) == 1
    n = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
    k = len(n)
    rho = np.broadcast_to(np.asarray(albedo, dtype=np.float64), (k, 3))
    vis = np.broadcast_to(np.asarray(visibility, dtype=np.float64), (k,))
    lam = 1.0 / np.broadcast_to(np.asarray(roughness, dtype=np.float64), (k,)) ** 2
    dirs, sa = latlong_grid(grid_height)
    radiance = env.texels if env.height == grid_height else env.sample(dirs)
    dirs = dirs.reshape(-1, 3)
    weighted = (radiance * sa[..., None]).reshape(-1, 3)
    out = np.empty((k, 3))
    if np.any(vis > 0) and wo is None:
        raise InvalidInputError("a view direction is required when visibility > 0")
    axes = None if wo is None else reflect(np.broadcast_to(np.asarray(wo, dtype=np.float64), (k, 3)), n)
    for s in range(0, k, _QUAD_CHUNK):
        sl = slice(s, s + _QUAD_CHUNK)
        cos = np.maximum(n[sl] @ dirs.T, 0.0)
        out[sl] = (cos @ weighted) * rho[sl] / math.pi
        if np.any(vis[sl] > 0):
            lobes = np.exp(lam[sl, None] * (axes[sl] @ dirs.T - 1.0))
            out[sl] += vis[sl, None] * (lobes @ weighted)
    return out[0] if single else out
