"""Finite-difference checks of the analytic fitting gradients on a tiny scene.

The scene is resampled until every pre-clamp color sits at least ``margin``
away from zero and every image residual at least 0.1 away from zero, so a
central difference with a small step never straddles a kink of the loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gprt.avatar import PosedAvatar
from gprt.fitting.config import LossWeights
from gprt.fitting.lights import LightProblem
from gprt.fitting.transfer import NaturalParams, TransferProblem
from gprt.fitting.views import build_views
from gprt.lighting import PointLightSet, fibonacci_directions
from gprt.shading import TransferParams
from gprt.splat_core import Camera, Gaussians

TRANSFER_CLASSES = ("albedo", "d_color", "d_mono", "roughness", "visibility")


@dataclass
class GradCheckScene:
    transfer: TransferProblem
    params: NaturalParams
    lights: LightProblem
    intensities: np.ndarray
    seed: int


def _random_scene(rng, k, size, order):
    pos = rng.normal(0.0, 0.07, (k, 3))
    q = rng.normal(size=(k, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    g = Gaussians(pos, q, rng.uniform(0.03, 0.08, (k, 3)), rng.uniform(0.5, 0.9, k))
    n = rng.normal(size=(k, 3))
    n[:, 2] = np.abs(n[:, 2]) + 0.5
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    m = (order + 1) ** 2 - 4
    tp = TransferParams(rng.uniform(0.3, 0.8, (k, 3)), rng.normal(0.0, 0.3, (k, 4, 3)),
                        rng.normal(0.0, 0.1, (k, m)), rng.uniform(0.4, 0.7, k), rng.uniform(0.2, 0.6, k))
    tp.d_color[:, 0, :] = np.abs(tp.d_color[:, 0, :]) + 0.6
    cams = [Camera.look_at([0.0, 0.0, 0.6], [0, 0, 0], [0, -1, 0], 40, size, size),
            Camera.look_at([0.4, 0.1, 0.45], [0, 0, 0], [0, -1, 0], 40, size, size)]
    return PosedAvatar(g, n, tp, np.arange(k)), cams


def _offset_targets(rng, clean):
    return clean + rng.choice([-1.0, 1.0], clean.shape) * rng.uniform(0.1, 0.2, clean.shape)


def make_gradcheck_scene(seed: int = 0, n_gaussians: int = 10, size: int = 24, order: int = 3,
                         margin: float = 0.01, max_tries: int = 1000) -> GradCheckScene:
    rng = np.random.default_rng(seed)
    frames = [PointLightSet(d[None], np.full((1, 3), 5.0), 0.3) for d in fibonacci_directions(6)]
    for _ in range(max_tries):
        posed, cams = _random_scene(rng, n_gaussians, size, order)
        views = build_views(posed, cams)
        if any(v.weights.nnz == 0 for v in views):
            continue
        params = NaturalParams.from_transfer(posed.transfer)
        blank = np.zeros((len(frames), len(cams), size, size, 3))
        probe = TransferProblem(posed, views, frames, blank, np.ones((len(cams), size, size)))
        clean = probe.render(params)
        pre = np.concatenate([c.ravel() for c in probe.preclamp(params)])
        if np.min(np.abs(pre)) < margin or not np.any(pre < 0):
            continue
        transfer = TransferProblem(posed, views, frames, _offset_targets(rng, clean),
                                   np.ones((len(cams), size, size)), LossWeights())
        dirs = fibonacci_directions(32)
        intensities = rng.uniform(0.5, 1.5, (32, 3))
        lp = LightProblem(posed, views, dirs, 4 * np.pi / 32, np.zeros((len(cams), size, size, 3)),
                          np.ones((len(cams), size, size)))
        lpre = np.concatenate([c.ravel() for c in lp.colors(intensities)])
        if np.min(np.abs(lpre)) < margin:
            continue
        lp.images = _offset_targets(rng, lp.render(intensities))
        return GradCheckScene(transfer, params, lp, intensities, seed)
    raise RuntimeError("could not build a kink-free gradient check scene")


def central_difference(fn, arr: np.ndarray, h: float) -> np.ndarray:
    """Gradient of ``fn()`` with respect to ``arr`` (modified in place and restored)."""
    out = np.zeros_like(arr)
    for ix in np.ndindex(arr.shape):
        old = arr[ix]
        arr[ix] = old + h
        fp = fn()
        arr[ix] = old - h
        fm = fn()
        arr[ix] = old
        out[ix] = (fp - fm) / (2 * h)
    return out


def relative_error(numeric: np.ndarray, analytic: np.ndarray) -> float:
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-300)
    return float(np.linalg.norm(numeric - analytic) / scale)


def check_gradients(scene: GradCheckScene, h: float = 1e-3) -> dict[str, float]:
    """Relative error of each parameter class, including light intensities."""
    p = scene.params
    _, grads, _ = scene.transfer.value_and_grad(p)
    errors = {}
    for name in TRANSFER_CLASSES:
        fd = central_difference(lambda: scene.transfer.value_and_grad(p, want_grad=False)[0],
                                getattr(p, name), h)
        errors[name] = relative_error(fd, grads[name])
    x = scene.intensities.copy()
    _, g_light = scene.lights.value_and_grad(x)
    fd = central_difference(lambda: scene.lights.value_and_grad(x)[0], x, h)
    errors["light_intensities"] = relative_error(fd, g_light)
    return errors
