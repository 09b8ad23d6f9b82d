"""3D Gaussian geometry, pinhole projection and alpha-composited rasterization.

Camera convention is OpenCV: camera looks down +z, x right, y down.  Pixel
(row i, col j) is sampled at continuous pixel coordinates ``(j + 0.5, i + 0.5)``.
Quaternions are stored ``(w, x, y, z)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.spatial.transform import Rotation

from gprt import _raster_kernels as kernels
from gprt.errors import InvalidInputError

ALPHA_CLAMP = 0.99
TRANSMITTANCE_MIN = 1e-4
# contributions below this are skipped; sets the conservative splat radius
ALPHA_MIN = 1.0 / 255.0
COV2D_FLOOR = 0.3
TILE_SIZE = 16
MIN_SIGMA_RADIUS = 3.0


def quat_to_rotmat(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    return Rotation.from_quat(q[..., [1, 2, 3, 0]]).as_matrix()


def rotmat_to_quat(r: np.ndarray) -> np.ndarray:
    """Rotation matrices to unit quaternions ``(w, x, y, z)`` with ``w >= 0``."""
    xyzw = Rotation.from_matrix(np.asarray(r, dtype=np.float64)).as_quat()
    q = xyzw[..., [3, 0, 1, 2]]
    return np.where(q[..., :1] < 0, -q, q)


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = np.moveaxis(np.asarray(a, dtype=np.float64), -1, 0)
    bw, bx, by, bz = np.moveaxis(np.asarray(b, dtype=np.float64), -1, 0)
    return np.stack([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ], axis=-1)


@dataclass(frozen=True)
class Gaussian3D:
    position: np.ndarray
    rotation: np.ndarray
    scale: np.ndarray
    opacity: float


@dataclass
class Gaussians:
    """A set of K splats stored as arrays."""

    positions: np.ndarray
    rotations: np.ndarray
    scales: np.ndarray
    opacities: np.ndarray

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        self.rotations = np.asarray(self.rotations, dtype=np.float64).reshape(-1, 4)
        self.scales = np.asarray(self.scales, dtype=np.float64).reshape(-1, 3)
        self.opacities = np.asarray(self.opacities, dtype=np.float64).reshape(-1)
        k = len(self.positions)
        if not (len(self.rotations) == len(self.scales) == len(self.opacities) == k):
            raise InvalidInputError("Gaussian arrays must have equal length")
        if np.any(np.abs(np.linalg.norm(self.rotations, axis=1) - 1.0) > 1e-6):
            raise InvalidInputError("rotations must be unit quaternions")
        if np.any(~(self.scales > 0)):
            raise InvalidInputError("scales must be positive")
        if np.any(~((self.opacities >= 0) & (self.opacities <= 1))):
            raise InvalidInputError("opacities must lie in [0, 1]")
        if not np.all(np.isfinite(self.positions)):
            raise InvalidInputError("positions must be finite")

    def __len__(self) -> int:
        return len(self.positions)

    def __getitem__(self, k: int) -> Gaussian3D:
        return Gaussian3D(self.positions[k], self.rotations[k], self.scales[k], float(self.opacities[k]))

    @classmethod
    def from_list(cls, items) -> "Gaussians":
        items = list(items)
        if not items:
            return cls.empty()
        return cls(
            [g.position for g in items],
            [g.rotation for g in items],
            [g.scale for g in items],
            [g.opacity for g in items],
        )

    @classmethod
    def empty(cls) -> "Gaussians":
        return cls(np.zeros((0, 3)), np.zeros((0, 4)), np.zeros((0, 3)), np.zeros(0))

    def subset(self, index) -> "Gaussians":
        return Gaussians(self.positions[index], self.rotations[index], self.scales[index], self.opacities[index])

    def covariances(self) -> np.ndarray:
        return covariance_from_qs(self.rotations, self.scales)


def covariance_from_qs(q, s) -> np.ndarray:
    """``R diag(s^2) R^T``; works on a single splat or a batch."""
    r = quat_to_rotmat(q)
    s = np.asarray(s, dtype=np.float64)
    return np.einsum("...ij,...j,...kj->...ik", r, s * s, r)


@dataclass
class Camera:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    world_to_cam: np.ndarray = field(default_factory=lambda: np.eye(4))
    near: float = 0.01
    far: float = 100.0

    def __post_init__(self):
        self.world_to_cam = np.asarray(self.world_to_cam, dtype=np.float64).reshape(4, 4)
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidInputError("focal lengths must be positive")
        if not self.near < self.far:
            raise InvalidInputError("near plane must be closer than far plane")
        self.width, self.height = int(self.width), int(self.height)

    @property
    def rotation(self) -> np.ndarray:
        return self.world_to_cam[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.world_to_cam[:3, 3]

    @property
    def center(self) -> np.ndarray:
        return -self.rotation.T @ self.translation

    def to_dict(self) -> dict:
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "width": self.width, "height": self.height,
            "world_to_cam": self.world_to_cam.tolist(),
            "near": self.near, "far": self.far,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Camera":
        try:
            return cls(
                float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]),
                int(d["width"]), int(d["height"]), np.asarray(d["world_to_cam"], dtype=np.float64),
                float(d.get("near", 0.01)), float(d.get("far", 100.0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidInputError(f"malformed camera: {exc}") from exc

    @classmethod
    def look_at(cls, eye, target, up=(0.0, 1.0, 0.0), fov_y_deg: float = 30.0,
                width: int = 128, height: int = 128, near: float = 0.01, far: float = 100.0) -> "Camera":
        eye = np.asarray(eye, dtype=np.float64)
        fwd = np.asarray(target, dtype=np.float64) - eye
        fwd /= np.linalg.norm(fwd)
        right = np.cross(fwd, np.asarray(up, dtype=np.float64))
        right /= np.linalg.norm(right)
        down = np.cross(fwd, right)
        w2c = np.eye(4)
        w2c[:3, :3] = np.stack([right, down, fwd])
        w2c[:3, 3] = -w2c[:3, :3] @ eye
        f = 0.5 * height / math.tan(math.radians(fov_y_deg) / 2)
        return cls(f, f, width / 2, height / 2, width, height, w2c, near, far)


@dataclass
class Projection:
    mean: np.ndarray
    cov: np.ndarray
    depth: float


@dataclass
class ProjectedSplats:
    means: np.ndarray
    covs: np.ndarray
    depths: np.ndarray
    valid: np.ndarray


def project_gaussians(cam: Camera, gaussians: Gaussians) -> ProjectedSplats:
    """EWA projection of every splat; ``valid`` is False outside the near/far range."""
    p = gaussians.positions @ cam.rotation.T + cam.translation
    z = p[:, 2]
    valid = (z > cam.near) & (z < cam.far)
    zs = np.where(valid, z, 1.0)
    x, y = p[:, 0], p[:, 1]
    means = np.stack([cam.fx * x / zs + cam.cx, cam.fy * y / zs + cam.cy], axis=1)
    jac = np.zeros((len(p), 2, 3))
    jac[:, 0, 0] = cam.fx / zs
    jac[:, 0, 2] = -cam.fx * x / (zs * zs)
    jac[:, 1, 1] = cam.fy / zs
    jac[:, 1, 2] = -cam.fy * y / (zs * zs)
    m = jac @ cam.rotation
    covs = m @ gaussians.covariances() @ np.swapaxes(m, 1, 2)
    covs[:, 0, 0] += COV2D_FLOOR
    covs[:, 1, 1] += COV2D_FLOOR
    return ProjectedSplats(means, covs, z, valid)


def project_gaussian(cam: Camera, g: Gaussian3D) -> Projection | None:
    """Project one splat; returns None (culled) when it is outside the depth range."""
    proj = project_gaussians(cam, Gaussians.from_list([g]))
    if not proj.valid[0]:
        return None
    return Projection(proj.means[0], proj.covs[0], float(proj.depths[0]))


@dataclass
class RenderTarget:
    """Composited radiance ``(H, W, C)`` and coverage ``alpha = 1 - T_final``."""

    rgb: np.ndarray
    alpha: np.ndarray

    @property
    def width(self) -> int:
        return self.rgb.shape[1]

    @property
    def height(self) -> int:
        return self.rgb.shape[0]


@dataclass
class _Prepared:
    order: np.ndarray
    mx: np.ndarray
    my: np.ndarray
    ca: np.ndarray
    cb: np.ndarray
    cc: np.ndarray
    op: np.ndarray
    log_thresh: np.ndarray
    px0: np.ndarray
    px1: np.ndarray
    py0: np.ndarray
    py1: np.ndarray


def _prepare(cam: Camera, gaussians: Gaussians, alpha_min: float) -> _Prepared:
    proj = project_gaussians(cam, gaussians)
    keep = proj.valid & (gaussians.opacities > alpha_min)
    idx = np.flatnonzero(keep)
    # stable sort keeps input order on depth ties
    order = idx[np.argsort(proj.depths[idx], kind="stable")]
    cov = proj.covs[order]
    a, b, c = cov[:, 0, 0], cov[:, 0, 1], cov[:, 1, 1]
    det = a * c - b * b
    op = gaussians.opacities[order]
    log_thresh = np.log(alpha_min / op)
    # beyond this Mahalanobis radius alpha < alpha_min, so the box is conservative
    maha = np.maximum(MIN_SIGMA_RADIUS, np.sqrt(-2.0 * log_thresh))
    lam_max = 0.5 * (a + c) + np.sqrt(0.25 * (a - c) ** 2 + b * b)
    radius = maha * np.sqrt(lam_max)
    mean = proj.means[order]
    return _Prepared(
        order=order,
        mx=np.ascontiguousarray(mean[:, 0]),
        my=np.ascontiguousarray(mean[:, 1]),
        ca=c / det, cb=-b / det, cc=a / det,
        op=op, log_thresh=log_thresh,
        px0=np.floor(mean[:, 0] - radius).astype(np.int64) - 1,
        px1=np.floor(mean[:, 0] + radius).astype(np.int64) + 1,
        py0=np.floor(mean[:, 1] - radius).astype(np.int64) - 1,
        py1=np.floor(mean[:, 1] + radius).astype(np.int64) + 1,
    )


def _target_size(cam: Camera, size) -> tuple[int, int]:
    width, height = (cam.width, cam.height) if size is None else size
    if width <= 0 or height <= 0:
        raise InvalidInputError(f"render target must be non-empty, got {width}x{height}")
    return int(width), int(height)


def _tile_grid(prep: _Prepared, width: int, height: int, tile: int):
    ntx = -(-width // tile)
    nty = -(-height // tile)
    offsets, ids = kernels.bin_tiles(prep.px0, prep.px1, prep.py0, prep.py1, tile, ntx, nty)
    return offsets, ids, ntx


def rasterize(
    gaussians: Gaussians,
    colors: np.ndarray,
    cam: Camera,
    size: tuple[int, int] | None = None,
    mode: str = "tiled",
    *,
    alpha_min: float = ALPHA_MIN,
    tile: int = TILE_SIZE,
) -> RenderTarget:
    """Front-to-back composite of per-splat colors ``(K, C)``.

    ``mode="reference"`` loops over every splat at every pixel; ``"tiled"`` bins
    splats into ``tile``-pixel squares first.  Both use one global depth sort.
    """
    width, height = _target_size(cam, size)
    colors = np.asarray(colors, dtype=np.float64)
    if colors.ndim == 1:
        colors = colors[:, None]
    if colors.shape[0] != len(gaussians):
        raise InvalidInputError("need one color row per Gaussian")
    if not np.all(np.isfinite(colors)):
        raise InvalidInputError("colors must be finite")
    out = np.zeros((height, width, colors.shape[1]))
    out_t = np.ones((height, width))
    if len(gaussians) == 0:
        return RenderTarget(out, 1.0 - out_t)
    prep = _prepare(cam, gaussians, alpha_min)
    col = np.ascontiguousarray(colors[prep.order])
    args = (prep.mx, prep.my, prep.ca, prep.cb, prep.cc, prep.op, prep.log_thresh, col, width, height)
    if mode == "reference":
        kernels.composite_reference(*args, ALPHA_CLAMP, TRANSMITTANCE_MIN, out, out_t)
    elif mode == "tiled":
        offsets, ids, ntx = _tile_grid(prep, width, height, tile)
        kernels.composite_tiled(offsets, ids, *args, tile, ntx, ALPHA_CLAMP, TRANSMITTANCE_MIN, out, out_t)
    else:
        raise InvalidInputError(f"unknown rasterizer mode {mode!r}")
    return RenderTarget(out, 1.0 - out_t)


def composite_weights(
    gaussians: Gaussians,
    cam: Camera,
    size: tuple[int, int] | None = None,
    *,
    alpha_min: float = ALPHA_MIN,
    tile: int = TILE_SIZE,
) -> tuple[sp.csr_matrix, np.ndarray]:
    """Sparse ``(H*W, K)`` operator with ``image = W @ colors`` for fixed geometry.

    Also returns the per-pixel alpha.  Rows are pixels in row-major order and
    entries within a row follow compositing order, so ``W @ colors`` reproduces
    :func:`rasterize` exactly.
    """
    width, height = _target_size(cam, size)
    k = len(gaussians)
    npix = width * height
    if k == 0:
        return sp.csr_matrix((npix, 0)), np.zeros((height, width))
    prep = _prepare(cam, gaussians, alpha_min)
    offsets, ids, ntx = _tile_grid(prep, width, height, tile)
    geo = (prep.mx, prep.my, prep.ca, prep.cb, prep.cc, prep.op, prep.log_thresh, width, height,
           tile, ntx, ALPHA_CLAMP, TRANSMITTANCE_MIN)
    indptr = np.zeros(npix + 1, dtype=np.int64)
    dummy_i = np.zeros(0, dtype=np.int64)
    dummy_v = np.zeros(0)
    kernels.tiled_weights(offsets, ids, *geo, indptr, dummy_i, dummy_v, True)
    indptr = np.cumsum(indptr)
    cols = np.empty(indptr[-1], dtype=np.int64)
    vals = np.empty(indptr[-1])
    kernels.tiled_weights(offsets, ids, *geo, indptr, cols, vals, False)
    # map sorted positions back to caller indices
    weights = sp.csr_matrix((vals, prep.order[cols], indptr), shape=(npix, k))
    alpha = np.asarray(weights.sum(axis=1)).reshape(height, width)
    return weights, alpha
