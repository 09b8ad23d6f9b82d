"""Per-camera linear operators for fitting with frozen geometry.

With geometry fixed, the image of one camera is ``W @ max(colors, 0)`` where
``W`` holds the compositing weights, and the colors depend only on the lights
and the transfer parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from gprt.avatar import PosedAvatar
from gprt.errors import InvalidInputError
from gprt.shading import (ShadingConfig, compose_normals, reflect, schlick_factor,
                          view_directions)
from gprt.splat_core import Camera, composite_weights


@dataclass
class ViewOperator:
    camera: Camera
    weights: sp.csr_matrix  # (H*W, K)
    alpha: np.ndarray  # (H, W)
    axes: np.ndarray  # (K, 3) reflection axes
    # multiplies the visibility, 1 unless Schlick modulation is enabled
    vis_factor: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.alpha.shape

    def composite(self, colors: np.ndarray) -> np.ndarray:
        """``(K, M)`` colors to a ``(H, W, M)`` image."""
        h, w = self.shape
        return (self.weights @ colors).reshape(h, w, -1)

    def composite_adjoint(self, grad_image: np.ndarray) -> np.ndarray:
        return self.weights.T @ grad_image.reshape(self.weights.shape[0], -1)


def build_views(posed: PosedAvatar, cameras: list[Camera], config: ShadingConfig | None = None,
                normal_offset: np.ndarray | None = None) -> list[ViewOperator]:
    config = config or ShadingConfig()
    g = posed.gaussians
    offset = posed.transfer.normal_offset if normal_offset is None else normal_offset
    n = compose_normals(posed.normals, offset)
    views = []
    for cam in cameras:
        w, alpha = composite_weights(g, cam)
        wo = view_directions(g.positions, cam.center)
        fac = schlick_factor(n, wo) if config.schlick_visibility else np.ones(len(g))
        views.append(ViewOperator(cam, w.tocsr(), alpha, reflect(wo, n), fac))
    return views


def check_targets(views: list[ViewOperator], images: np.ndarray, masks: np.ndarray | None,
                  n_frames: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Validate ``images`` ((C, H, W, 3) or (F, C, H, W, 3)) and masks (C, H, W)."""
    images = np.asarray(images, dtype=np.float64)
    c = len(views)
    if c == 0:
        raise InvalidInputError("at least one camera is required")
    h, w = views[0].shape
    if any(v.shape != (h, w) for v in views):
        raise InvalidInputError("all cameras must share one resolution")
    expect = (c, h, w, 3) if n_frames is None else (n_frames, c, h, w, 3)
    if images.shape != expect:
        raise InvalidInputError(f"images have shape {images.shape}, expected {expect}")
    if not np.all(np.isfinite(images)):
        raise InvalidInputError("images must be finite")
    if masks is None:
        masks = np.stack([v.alpha for v in views])
    masks = np.asarray(masks, dtype=np.float64)
    if masks.shape != (c, h, w):
        raise InvalidInputError(f"masks have shape {masks.shape}, expected {(c, h, w)}")
    if not masks.sum() > 0:
        raise InvalidInputError("masks select no pixels")
    return images, masks
