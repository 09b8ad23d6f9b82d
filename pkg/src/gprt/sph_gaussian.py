"""Spherical-Gaussian lobes for the specular term.

A lobe is ``G(w; a, lam) = exp(lam * (w . a - 1))``.  Roughness maps to
sharpness as ``lam = 1 / sigma**2`` everywhere in this package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from gprt.errors import InvalidInputError

if TYPE_CHECKING:
    from gprt.lighting import PointLightSet

MAX_SHARPNESS = 1e6
# above this sharpness 512 lights under-resolve the lobe
SHARP_LOBE_THRESHOLD = 50.0


@dataclass(frozen=True)
class SGLobe:
    axis: np.ndarray
    sharpness: float

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=np.float64).reshape(3)
        if abs(np.linalg.norm(axis) - 1.0) > 1e-6:
            raise InvalidInputError("lobe axis must be unit length")
        if not (0.0 < self.sharpness <= MAX_SHARPNESS):
            raise InvalidInputError(f"sharpness must lie in (0, {MAX_SHARPNESS:g}], got {self.sharpness}")
        object.__setattr__(self, "axis", axis)

    @classmethod
    def from_roughness(cls, axis, roughness: float) -> "SGLobe":
        return cls(axis, float(roughness_to_sharpness(roughness)))


def roughness_to_sharpness(roughness):
    """``lam = 1/sigma**2`` for roughness in (0, 1]; works elementwise on arrays."""
    r = np.asarray(roughness, dtype=np.float64)
    if np.any(~(r > 0.0)) or np.any(r > 1.0):
        raise InvalidInputError("roughness must lie in (0, 1]")
    lam = 1.0 / (r * r)
    return float(lam) if lam.ndim == 0 else lam


def sg_eval(omega, lobe: SGLobe):
    w = np.asarray(omega, dtype=np.float64)
    if np.any(np.abs(np.linalg.norm(w, axis=-1) - 1.0) > 1e-6):
        raise InvalidInputError("direction must be unit length")
    val = np.exp(lobe.sharpness * (w @ lobe.axis - 1.0))
    return float(val) if np.ndim(val) == 0 else val


def sg_solid_integral(lobe_or_sharpness) -> float:
    """Closed-form integral of the lobe over the sphere, ``2pi/lam (1 - e^{-2 lam})``."""
    lam = lobe_or_sharpness.sharpness if isinstance(lobe_or_sharpness, SGLobe) else lobe_or_sharpness
    lam = np.asarray(lam, dtype=np.float64)
    val = 2.0 * math.pi / lam * -np.expm1(-2.0 * lam)
    return float(val) if val.ndim == 0 else val


def sg_weights(light_dirs: np.ndarray, axes: np.ndarray, sharpness: np.ndarray) -> np.ndarray:
    """Lobe values for K lobes at N light directions, shape ``(K, N)``."""
    cos = axes @ light_dirs.T
    return np.exp(np.asarray(sharpness)[:, None] * (cos - 1.0))


def sg_env_integral(lights: "PointLightSet", lobe: SGLobe, *, analytic_sharp: bool = False) -> np.ndarray:
    """Integral of light times lobe, as a discrete sum over the light set.

    With ``analytic_sharp`` on, lobes sharper than ``SHARP_LOBE_THRESHOLD`` use the
    radiance of the light nearest the axis times the closed-form lobe integral.
    """
    if len(lights) == 0:
        raise InvalidInputError("light set is empty")
    if analytic_sharp and lobe.sharpness > SHARP_LOBE_THRESHOLD:
        nearest = int(np.argmax(lights.directions @ lobe.axis))
        return lights.intensities[nearest] * sg_solid_integral(lobe)
    g = np.exp(lobe.sharpness * (lights.directions @ lobe.axis - 1.0))
    return (g * lights.solid_angle) @ lights.intensities
