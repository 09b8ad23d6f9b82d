"""Environment lighting: lat-long radiance maps, point-light sets, SH vectors.

World frame is y-up.  Lat-long texel (row i, col j) is centred at polar angle
``theta = (i + 0.5) * pi / H`` measured from +y and azimuth
``phi = (j + 0.5) * 2pi / W``; direction ``(sin t sin p, cos t, sin t cos p)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from gprt.errors import InvalidInputError
from gprt.sh_math import DEFAULT_ORDER, SHCoeffs, _check_order, project_sphere_fn

N_ENV_LIGHTS = 512
GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


def dirs_from_angles(theta, phi) -> np.ndarray:
    st = np.sin(theta)
    return np.stack([st * np.sin(phi), np.cos(theta), st * np.cos(phi)], axis=-1)


def angles_from_dirs(dirs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d = np.asarray(dirs, dtype=np.float64)
    theta = np.arccos(np.clip(d[..., 1], -1.0, 1.0))
    phi = np.mod(np.arctan2(d[..., 0], d[..., 2]), 2 * math.pi)
    return theta, phi


@dataclass(frozen=True)
class EnvMap:
    """Equirectangular linear-RGB radiance map, row 0 at the north pole (+y)."""

    texels: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.texels, dtype=np.float64)
        if t.ndim != 3 or t.shape[2] != 3:
            raise InvalidInputError(f"env map must be (H, W, 3), got {t.shape}")
        if t.shape[1] != 2 * t.shape[0]:
            raise InvalidInputError(f"env map width must be twice its height, got {t.shape[1]}x{t.shape[0]}")
        if not np.all(np.isfinite(t)) or np.any(t < 0):
            raise InvalidInputError("env map texels must be finite and non-negative")
        t.setflags(write=False)
        object.__setattr__(self, "texels", t)

    @property
    def height(self) -> int:
        return self.texels.shape[0]

    @property
    def width(self) -> int:
        return self.texels.shape[1]

    @classmethod
    def constant(cls, rgb, height: int = 64) -> "EnvMap":
        return cls(np.broadcast_to(np.asarray(rgb, dtype=np.float64), (height, 2 * height, 3)).copy())

    @classmethod
    def from_function(cls, fn, height: int = 64) -> "EnvMap":
        """Tabulate ``fn(dirs) -> (..., 3)`` at texel centres."""
        dirs, _ = latlong_grid(height)
        return cls(np.asarray(fn(dirs), dtype=np.float64))

    def texel_dirs_and_solid_angles(self) -> tuple[np.ndarray, np.ndarray]:
        return latlong_grid(self.height)

    def sample(self, dirs) -> np.ndarray:
        """Bilinear lookup at arbitrary directions (wraps in azimuth, clamps at the poles)."""
        theta, phi = angles_from_dirs(dirs)
        h, w = self.height, self.width
        x = phi / (2 * math.pi) * w - 0.5
        y = theta / math.pi * h - 0.5
        x0 = np.floor(x).astype(np.int64)
        y0 = np.floor(y).astype(np.int64)
        fx = (x - x0)[..., None]
        fy = (y - y0)[..., None]
        xa, xb = np.mod(x0, w), np.mod(x0 + 1, w)
        ya, yb = np.clip(y0, 0, h - 1), np.clip(y0 + 1, 0, h - 1)
        t = self.texels
        top = t[ya, xa] * (1 - fx) + t[ya, xb] * fx
        bot = t[yb, xa] * (1 - fx) + t[yb, xb] * fx
        return top * (1 - fy) + bot * fy

    def integral(self) -> np.ndarray:
        """Total flux ``int L dw`` per channel using texel solid angles."""
        _, sa = self.texel_dirs_and_solid_angles()
        return np.einsum("hw,hwc->c", sa, self.texels)

    def scaled(self, factor: float) -> "EnvMap":
        return EnvMap(self.texels * factor)

    def to_sh(self, order: int = DEFAULT_ORDER) -> SHCoeffs:
        dirs, sa = self.texel_dirs_and_solid_angles()
        return project_sphere_fn(dirs.reshape(-1, 3), self.texels.reshape(-1, 3), sa.reshape(-1), order)


def latlong_grid(height: int) -> tuple[np.ndarray, np.ndarray]:
    """Texel-centre directions ``(H, 2H, 3)`` and solid angles ``(H, 2H)``."""
    width = 2 * height
    theta = (np.arange(height) + 0.5) * math.pi / height
    phi = (np.arange(width) + 0.5) * 2 * math.pi / width
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    dirs = dirs_from_angles(tt, pp)
    solid = np.sin(tt) * (math.pi / height) * (2 * math.pi / width)
    return dirs, solid


@dataclass
class PointLightSet:
    """Distant point lights; ``solid_angle`` is the patch each light stands for.

    Intensities are radiance, so a light contributes ``intensity * solid_angle``
    of irradiance-weighted flux.  Defaults to ``4pi / N``.
    """

    directions: np.ndarray
    intensities: np.ndarray
    solid_angle: float = field(default=None)

    def __post_init__(self):
        d = np.asarray(self.directions, dtype=np.float64).reshape(-1, 3)
        i = np.asarray(self.intensities, dtype=np.float64).reshape(-1, 3)
        if d.shape[0] != i.shape[0]:
            raise InvalidInputError("directions and intensities must have equal length")
        if np.any(np.abs(np.linalg.norm(d, axis=1) - 1.0) > 1e-6):
            raise InvalidInputError("light directions must be unit length")
        if not np.all(np.isfinite(i)) or np.any(i < 0):
            raise InvalidInputError("light intensities must be finite and non-negative")
        if 1 < d.shape[0] <= 4096:
            gram = d @ d.T
            np.fill_diagonal(gram, -2.0)
            if np.any(gram > 1.0 - 1e-12):
                raise InvalidInputError("light directions must be pairwise distinct")
        self.directions = d
        self.intensities = i
        if self.solid_angle is None:
            self.solid_angle = 4 * math.pi / max(d.shape[0], 1)
        self.solid_angle = float(self.solid_angle)
        if not self.solid_angle > 0:
            raise InvalidInputError("solid angle must be positive")

    def __len__(self) -> int:
        return self.directions.shape[0]

    def with_intensities(self, intensities) -> "PointLightSet":
        return PointLightSet(self.directions, intensities, self.solid_angle)

    def scaled(self, factor: float) -> "PointLightSet":
        return self.with_intensities(self.intensities * factor)

    def total_flux(self) -> np.ndarray:
        return self.intensities.sum(axis=0) * self.solid_angle

    def to_dict(self) -> dict:
        return {
            "directions": self.directions.tolist(),
            "intensities": self.intensities.tolist(),
            "solid_angle": self.solid_angle,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PointLightSet":
        try:
            return cls(data["directions"], data["intensities"], data.get("solid_angle"))
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidInputError(f"malformed light set: {exc}") from exc


def fibonacci_directions(n: int) -> np.ndarray:
    """Spherical Fibonacci lattice of ``n`` unit vectors (y-up)."""
    if int(n) != n or n < 1:
        raise InvalidInputError(f"need at least one direction, got {n!r}")
    i = np.arange(n, dtype=np.float64)
    y = 1.0 - (2.0 * i + 1.0) / n
    r = np.sqrt(np.maximum(0.0, 1.0 - y * y))
    phi = i * GOLDEN_ANGLE
    d = np.stack([r * np.sin(phi), y, r * np.cos(phi)], axis=1)
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def uniform_lights(intensity=1.0, n: int = N_ENV_LIGHTS) -> PointLightSet:
    rgb = np.broadcast_to(np.asarray(intensity, dtype=np.float64), (3,))
    return PointLightSet(fibonacci_directions(n), np.tile(rgb, (n, 1)))


def envmap_to_pointlights(env: EnvMap, n: int = N_ENV_LIGHTS) -> PointLightSet:
    dirs = fibonacci_directions(n)
    return PointLightSet(dirs, env.sample(dirs))


def pointlights_to_sh(lights: PointLightSet, order: int = DEFAULT_ORDER) -> SHCoeffs:
    _check_order(order)
    if len(lights) == 0:
        return SHCoeffs(order, np.zeros(((order + 1) ** 2, 3)))
    return project_sphere_fn(
        lights.directions, lights.intensities, lights.solid_angle, order, check_weights=False
    )


def random_smooth_envmap(rng: np.random.Generator, height: int = 64, n_lobes: int = 4,
                         peak: float = 4.0) -> EnvMap:
    """Sky gradient plus a few broad coloured lobes; used as a test environment."""
    dirs, _ = latlong_grid(height)
    base = rng.uniform(0.1, 0.5, size=3) + rng.uniform(0.0, 0.3, size=3) * dirs[..., 1:2]
    tex = np.maximum(base, 0.02) * np.ones(dirs.shape[:-1] + (3,))
    for _ in range(n_lobes):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        sharp = rng.uniform(2.0, 10.0)
        color = rng.uniform(0.2, 1.0, size=3) * rng.uniform(0.3, peak)
        tex = tex + color * np.exp(sharp * (dirs @ axis - 1.0))[..., None]
    return EnvMap(tex)
