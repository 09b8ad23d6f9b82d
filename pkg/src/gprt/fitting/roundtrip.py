"""Synthetic round trips: render a toy head with known lights or transfer, fit, compare."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from gprt.avatar import pose_avatar
from gprt.fitting.config import FitConfig, light_fit_defaults, transfer_fit_defaults
from gprt.fitting.lights import fit_lights, flux_within
from gprt.fitting.losses import psnr
from gprt.fitting.transfer import fit_transfer, relight_transfer
from gprt.lighting import (N_ENV_LIGHTS, PointLightSet, envmap_to_pointlights, fibonacci_directions,
                           random_smooth_envmap)
from gprt.synth import OLAT_INTENSITY, make_toy_head, olat_frames, orbit_cameras, render_frames


@dataclass
class Scene:
    n_gaussians: int = 2000
    n_cameras: int = 8
    resolution: int = 64
    seed: int = 0


@dataclass
class LightRoundTrip:
    psnr: float
    flux_fraction: float | None
    losses: list[float] = field(repr=False)


@dataclass
class TransferRoundTrip:
    relight_psnr: list[float]
    fit_psnr: float
    mean_visibility: float
    losses: list[float] = field(repr=False)


def _setup(scene: Scene, specular: bool = True):
    avatar = make_toy_head(scene.n_gaussians, scene.seed)
    if not specular:
        avatar.transfer = avatar.transfer.replace(visibility=np.zeros(len(avatar)))
    cams = orbit_cameras(scene.n_cameras, resolution=scene.resolution)
    return avatar, cams


def light_round_trip(scene: Scene = Scene(), target: str = "env", init=None,
                     config: FitConfig | None = None, light_dir=(0.3, 0.4, 0.866)) -> LightRoundTrip:
    """Fit 512 lights to renders under a known environment.

    ``target="env"`` uses a random smooth environment map and scores the PSNR of
    the re-rendered images; ``"single"`` uses one strong light on an otherwise
    dark sphere and also scores the flux fraction within 30 degrees of it.
    ``init="half"`` starts from half the true uniform intensity, which only
    applies to ``target="uniform"``.
    """
    avatar, cams = _setup(scene)
    if target == "env":
        truth = envmap_to_pointlights(random_smooth_envmap(np.random.default_rng(scene.seed + 100)))
    elif target == "uniform":
        truth = PointLightSet(fibonacci_directions(N_ENV_LIGHTS), np.ones((N_ENV_LIGHTS, 3)))
    elif target == "single":
        d = np.asarray(light_dir, dtype=np.float64)
        truth = PointLightSet((d / np.linalg.norm(d))[None], np.full((1, 3), OLAT_INTENSITY),
                              4 * math.pi / N_ENV_LIGHTS)
    else:
        raise ValueError(f"unknown target {target!r}")
    images, alphas, _ = render_frames(avatar, [truth], cams)
    if init == "half":
        init = 0.5 * float(truth.intensities.mean())
    result = fit_lights(pose_avatar(avatar), images[0], cams, alphas, N_ENV_LIGHTS,
                        config or light_fit_defaults(), init)
    flux = flux_within(result.lights, truth.directions[0], 30.0) if target == "single" else None
    return LightRoundTrip(result.report.metrics["psnr"], flux, result.report.losses)


def transfer_round_trip(scene: Scene = Scene(), n_olat: int = 64, n_envs: int = 5,
                        config: FitConfig | None = None, specular: bool = True) -> TransferRoundTrip:
    """Fit transfer to ``n_olat`` single-light frames, relight under held-out env maps."""
    avatar, cams = _setup(scene, specular)
    frames = olat_frames(n_olat)
    images, alphas, _ = render_frames(avatar, frames, cams)
    posed = pose_avatar(avatar)
    with warnings.catch_warnings():
        warnings.simplefilter("error", RuntimeWarning)
        fit = fit_transfer(posed, images, frames, cams, alphas, config or transfer_fit_defaults())
    rng = np.random.default_rng(scene.seed + 1000)
    scores = []
    for _ in range(n_envs):
        lights = envmap_to_pointlights(random_smooth_envmap(rng))
        truth, _, _ = render_frames(avatar, [lights], cams)
        pred = relight_transfer(posed, fit.transfer, cams, lights)
        scores.append(psnr(pred, truth[0], alphas))
    return TransferRoundTrip(scores, fit.report.metrics["psnr"], fit.report.metrics["mean_visibility"],
                             fit.report.losses)
