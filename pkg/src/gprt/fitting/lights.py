"""Environment-light fitting: recover point-light intensities for a frozen avatar.

The avatar's colors are linear in the intensities, so each camera reduces to a
fixed matrix per channel.  The objective is the masked L1 image error and the
optimizer is Adam projected onto nonnegative intensities.
"""

from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from gprt.avatar import Avatar, PosedAvatar, pose_avatar
from gprt.errors import DivergenceError, InvalidInputError
from gprt.fitting.adam import Adam
from gprt.fitting.config import FitConfig, light_fit_defaults
from gprt.fitting.losses import psnr
from gprt.fitting.views import ViewOperator, build_views, check_targets
from gprt.lighting import N_ENV_LIGHTS, PointLightSet, fibonacci_directions
from gprt.shading import ShadingConfig, specular_light_matrix
from gprt.sh_math import sh_basis
from gprt.splat_core import Camera


def serial_reductions(enabled: bool):
    """Context pinning BLAS to one thread when ``enabled``."""
    return threadpool_limits(limits=1) if enabled else contextlib.nullcontext()


@dataclass
class FitReport:
    losses: list[float]
    metrics: dict
    config: dict
    seed: int
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"losses": self.losses, "final_loss": self.losses[-1] if self.losses else None,
                "metrics": self.metrics, "config": self.config, "seed": self.seed, **self.extra}


@dataclass
class LightFitResult:
    lights: PointLightSet
    report: FitReport


class LightProblem:
    """Masked L1 between renders and targets as a function of intensities ``(N, 3)``."""

    def __init__(self, posed: PosedAvatar, views: list[ViewOperator], directions: np.ndarray,
                 solid_angle: float, images: np.ndarray, masks: np.ndarray,
                 shading: ShadingConfig | None = None):
        shading = shading or ShadingConfig()
        tr = posed.transfer
        self.views = views
        self.directions = directions
        self.solid_angle = solid_angle
        self.images, self.masks = check_targets(views, images, masks)
        y = sh_basis(directions, tr.order)
        # diffuse[c, k, j]: channel-c color of Gaussian k per unit intensity of light j
        self.diffuse = np.ascontiguousarray(
            (tr.albedo.T[:, :, None] * np.einsum("kic,ji->ckj", tr.full_transfer(), y)) * solid_angle)
        lam = 1.0 / tr.roughness**2
        # each camera only needs the Gaussians that reach its pixels
        self.visible = [np.unique(v.weights.indices) for v in views]
        self.weights = [v.weights[:, vis].tocsr() for v, vis in zip(views, self.visible)]
        self.specular = [
            (tr.visibility[vis] * v.vis_factor[vis])[:, None]
            * specular_light_matrix(v.axes[vis], lam[vis], directions, solid_angle, shading.analytic_sharp)
            for v, vis in zip(views, self.visible)
        ]
        self.count = 3.0 * self.masks.sum()

    def _base(self, intensities: np.ndarray) -> np.ndarray:
        return np.matmul(self.diffuse, intensities.T[:, :, None])[:, :, 0].T

    def colors(self, intensities: np.ndarray) -> list[np.ndarray]:
        """Pre-clamp colors of the visible Gaussians of each camera."""
        base = self._base(intensities)
        return [base[vis] + s @ intensities for vis, s in zip(self.visible, self.specular)]

    def render(self, intensities: np.ndarray) -> np.ndarray:
        h, w = self.views[0].shape
        return np.stack([(wt @ np.maximum(c, 0.0)).reshape(h, w, 3)
                         for wt, c in zip(self.weights, self.colors(intensities))])

    def value_and_grad(self, intensities: np.ndarray) -> tuple[float, np.ndarray]:
        h, w = self.views[0].shape
        total = 0.0
        g_base = np.zeros((self.diffuse.shape[1], 3))
        grad = np.zeros_like(intensities)
        for ci, (wt, vis, pre, spec) in enumerate(
                zip(self.weights, self.visible, self.colors(intensities), self.specular)):
            r = (wt @ np.maximum(pre, 0.0)).reshape(h, w, 3) - self.images[ci]
            m = self.masks[ci][:, :, None]
            total += float(np.sum(np.abs(r) * m))
            g_pre = (wt.T @ (np.sign(r) * m / self.count).reshape(-1, 3)) * (pre > 0)
            g_base[vis] += g_pre
            grad += spec.T @ g_pre
        grad += np.matmul(self.diffuse.transpose(0, 2, 1), g_base.T[:, :, None])[:, :, 0].T
        return total / self.count, grad


def uniform_init_scale(problem: LightProblem) -> float:
    """Least-squares intensity for a uniform environment matching the targets."""
    unit = problem.render(np.ones((len(problem.directions), 3)))
    m = problem.masks[:, :, :, None]
    den = float(np.sum(m * unit * unit))
    return float(np.sum(m * unit * problem.images)) / den if den > 0 else 1.0


def fit_lights(
    avatar: Avatar | PosedAvatar,
    images: np.ndarray,
    cameras: list[Camera],
    masks: np.ndarray | None = None,
    n_lights: int = N_ENV_LIGHTS,
    config: FitConfig | None = None,
    init: PointLightSet | float | None = None,
    shading: ShadingConfig | None = None,
) -> LightFitResult:
    """Fit ``n_lights`` Fibonacci-lattice intensities to target images ``(C, H, W, 3)``.

    ``init`` is a light set on the same lattice, a uniform intensity, or None for
    the uniform intensity that best explains the targets in the least-squares sense.
    """
    config = config or light_fit_defaults()
    posed = avatar if isinstance(avatar, PosedAvatar) else pose_avatar(avatar)
    if isinstance(init, PointLightSet):
        dirs, solid_angle = init.directions, init.solid_angle
        if len(init) == 0:
            raise InvalidInputError("initial light set is empty")
    else:
        if n_lights < 1:
            raise InvalidInputError("n_lights must be >= 1")
        dirs, solid_angle = fibonacci_directions(n_lights), 4.0 * math.pi / n_lights
    with serial_reductions(config.deterministic):
        views = build_views(posed, cameras, shading)
        problem = LightProblem(posed, views, dirs, solid_angle, images, masks, shading)
        if isinstance(init, PointLightSet):
            x = init.intensities.copy()
        else:
            u = uniform_init_scale(problem) if init is None else float(init)
            if not (u >= 0 and math.isfinite(u)):
                raise InvalidInputError("initial intensity must be finite and >= 0")
            x = np.full((len(dirs), 3), u)
        scale = float(np.mean(x)) if np.mean(x) > 0 else 1.0
        opt = Adam(config.beta1, config.beta2, config.eps)
        params = {"intensities": x}
        losses = []
        for it in range(config.iterations):
            loss, grad = problem.value_and_grad(params["intensities"])
            if not math.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise DivergenceError(f"light fit diverged at iteration {it}", iteration=it)
            losses.append(loss)
            opt.step(params, {"intensities": grad}, config.lr_at(it) * scale)
            if config.project_nonneg:
                np.maximum(params["intensities"], 0.0, out=params["intensities"])
        x = params["intensities"]
        final, _ = problem.value_and_grad(x)
        if not math.isfinite(final):
            raise DivergenceError("light fit produced a non-finite loss", iteration=config.iterations)
        losses.append(final)
        rendered = problem.render(x)
    metrics = {
        "l1": final,
        "psnr": psnr(rendered, problem.images, problem.masks),
        "initial_intensity": scale,
        "n_lights": len(dirs),
        "iterations": config.iterations,
    }
    report = FitReport(losses, metrics, config.to_dict(), config.seed)
    return LightFitResult(PointLightSet(dirs, x, solid_angle), report)


def flux_within(lights: PointLightSet, direction, angle_deg: float) -> float:
    """Fraction of total flux carried by lights within ``angle_deg`` of ``direction``."""
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d)
    flux = lights.intensities.sum(axis=1)
    total = float(flux.sum())
    if total <= 0:
        return 0.0
    near = lights.directions @ d >= math.cos(math.radians(angle_deg))
    return float(flux[near].sum()) / total
