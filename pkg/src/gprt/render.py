"""Pose, shade and rasterize an avatar for one camera."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gprt.avatar import Avatar, PosedAvatar, pose_avatar
from gprt.lighting import PointLightSet
from gprt.rig import RigPose
from gprt.shading import ShadingConfig, shade_for_view
from gprt.splat_core import Camera, RenderTarget, rasterize


@dataclass
class RenderResult:
    target: RenderTarget
    colors_preclamp: np.ndarray
    posed: PosedAvatar


def render_avatar(
    avatar: Avatar | PosedAvatar,
    lights: PointLightSet,
    camera: Camera,
    pose: RigPose | None = None,
    mode: str = "tiled",
    config: ShadingConfig | None = None,
    size: tuple[int, int] | None = None,
) -> RenderResult:
    posed = avatar if isinstance(avatar, PosedAvatar) else pose_avatar(avatar, pose)
    pre = shade_for_view(posed.transfer, posed.gaussians.positions, posed.normals, camera.center,
                         lights, config)
    target = rasterize(posed.gaussians, np.maximum(pre, 0.0), camera, size, mode)
    return RenderResult(target, pre, posed)
