"""Per-Gaussian transfer fitting from multi-light images with frozen geometry.

Unknowns are albedo, color and mono transfer coefficients, lobe roughness and
visibility.  Albedo and visibility go through a logistic, roughness through a
logistic scaled into ``[SIGMA_MIN, 1]``; transfer coefficients are free.
Gradients are analytic: shading is linear in the transfer and the lights, and
compositing is a fixed linear map per camera.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from gprt.avatar import Avatar, PosedAvatar, pose_avatar
from gprt.errors import DivergenceError, InvalidInputError
from gprt.fitting.adam import Adam
from gprt.fitting.config import FitConfig, LossWeights, transfer_fit_defaults
from gprt.fitting.lights import FitReport, serial_reductions
from gprt.fitting.losses import SSIM_WINDOW, psnr, scale_bounds, scale_reg, ssim_and_grad
from gprt.fitting.views import ViewOperator, build_views, check_targets
from gprt.lighting import PointLightSet, pointlights_to_sh
from gprt.sh_math import clamped_cosine_zonal
from gprt.shading import N_COLOR_COEFFS, ShadingConfig, TransferParams, full_transfer
from gprt.sph_gaussian import SHARP_LOBE_THRESHOLD, sg_solid_integral
from gprt.splat_core import Camera

SIGMA_MIN = 0.05
# keeps logistic parameters finite at the box edges
_EDGE = 1e-6


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _logit(p):
    p = np.clip(p, _EDGE, 1.0 - _EDGE)
    return np.log(p) - np.log1p(-p)


@dataclass
class NaturalParams:
    """Transfer unknowns in their natural units."""

    albedo: np.ndarray  # (K, 3)
    d_color: np.ndarray  # (K, 4, 3)
    d_mono: np.ndarray  # (K, M)
    roughness: np.ndarray  # (K,)
    visibility: np.ndarray  # (K,)

    @classmethod
    def from_transfer(cls, t: TransferParams) -> "NaturalParams":
        return cls(t.albedo.copy(), t.d_color.copy(), t.d_mono.copy(), t.roughness.copy(),
                   t.visibility.copy())

    def to_transfer(self, normal_offset=None) -> TransferParams:
        return TransferParams(np.clip(self.albedo, 0.0, 1.0), self.d_color, self.d_mono,
                              np.clip(self.roughness, 1e-6, 1.0), np.clip(self.visibility, 0.0, 1.0),
                              normal_offset)

    def as_dict(self) -> dict[str, np.ndarray]:
        return dict(albedo=self.albedo, d_color=self.d_color, d_mono=self.d_mono,
                    roughness=self.roughness, visibility=self.visibility)


def to_unconstrained(p: NaturalParams) -> dict[str, np.ndarray]:
    return {
        "albedo": _logit(p.albedo),
        "d_color": p.d_color.copy(),
        "d_mono": p.d_mono.copy(),
        "roughness": _logit((np.clip(p.roughness, SIGMA_MIN, 1.0) - SIGMA_MIN) / (1.0 - SIGMA_MIN)),
        "visibility": _logit(p.visibility),
    }


def to_natural(u: dict[str, np.ndarray]) -> NaturalParams:
    return NaturalParams(_sigmoid(u["albedo"]), u["d_color"], u["d_mono"],
                         SIGMA_MIN + (1.0 - SIGMA_MIN) * _sigmoid(u["roughness"]),
                         _sigmoid(u["visibility"]))


def chain_to_unconstrained(u: dict[str, np.ndarray], g: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    out = dict(g)
    for name in ("albedo", "visibility"):
        s = _sigmoid(u[name])
        out[name] = g[name] * s * (1.0 - s)
    s = _sigmoid(u["roughness"])
    out["roughness"] = g["roughness"] * (1.0 - SIGMA_MIN) * s * (1.0 - s)
    return out


def _lobe_matrix(cosines, lam, solid_angle, analytic_sharp, groups=None):
    """Light-sum matrix ``M`` of the SG integral and its derivative in ``lam``.

    ``solid_angle`` is per light.  With ``analytic_sharp``, lobes sharper than
    the threshold take the closed-form integral at the nearest light of each
    group (one group per frame).
    """
    m = np.exp(lam[:, None] * (cosines - 1.0)) * solid_angle
    dm = m * (cosines - 1.0)
    if analytic_sharp:
        sharp = np.flatnonzero(lam > SHARP_LOBE_THRESHOLD)
        if len(sharp):
            ls = lam[sharp]
            m[sharp] = 0.0
            dm[sharp] = 0.0
            integral = sg_solid_integral(ls)
            # d/dlam of 2 pi (1 - e^{-2 lam}) / lam
            d_integral = 2 * math.pi * (2 * np.exp(-2 * ls) / ls + np.expm1(-2 * ls) / ls**2)
            bounds = [0, cosines.shape[1]] if groups is None else groups
            for a, b in zip(bounds[:-1], bounds[1:]):
                if b <= a:
                    continue
                nearest = a + np.argmax(cosines[sharp, a:b], axis=1)
                m[sharp, nearest] = integral
                dm[sharp, nearest] = d_integral
    return m, dm


class TransferProblem:
    """Weighted L1 + SSIM + regularizers over frames ``(F, C, H, W, 3)``.

    L1 is the mean over masked pixels, channels, frames and cameras; SSIM is the
    mean over frames and cameras of the per-image mean SSIM.
    """

    def __init__(self, posed: PosedAvatar, views: list[ViewOperator], frames: list[PointLightSet],
                 images: np.ndarray, masks: np.ndarray | None, weights: LossWeights | None = None,
                 shading: ShadingConfig | None = None):
        self.shading = shading or ShadingConfig()
        self.weights = weights or LossWeights()
        self.views = views
        self.frames = frames
        self.order = posed.transfer.order
        self.k = len(posed.transfer)
        self.images, self.masks = check_targets(views, images, masks, n_frames=len(frames))
        images = self.images
        self.shape = views[0].shape
        if min(self.shape) < SSIM_WINDOW:
            raise InvalidInputError(f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW}")
        # per camera (H, W, F, 3), the layout the compositing operator produces
        self.targets = [np.ascontiguousarray(images[:, ci].transpose(1, 2, 0, 3)) for ci in range(len(views))]
        self.light_sh = np.stack([pointlights_to_sh(f, self.order).values for f in frames])
        # all frame lights stacked in frame order
        counts = [len(f) for f in frames]
        self.light_frame = np.repeat(np.arange(len(frames)), counts)
        self.light_dirs = np.concatenate([f.directions for f in frames] + [np.zeros((0, 3))])
        self.light_intensity = np.concatenate([f.intensities for f in frames] + [np.zeros((0, 3))])
        self.light_solid_angle = np.repeat([f.solid_angle for f in frames], counts).astype(np.float64)
        self.visible = [np.unique(v.weights.indices) for v in views]
        self.comp = [v.weights[:, vis].tocsr() for v, vis in zip(views, self.visible)]
        self.cosines = [v.axes[vis] @ self.light_dirs.T for v, vis in zip(views, self.visible)]
        self.vis_factor = [v.vis_factor[vis] for v, vis in zip(views, self.visible)]
        self.crops = [self._ssim_crop(v, t) for v, t in zip(views, self.targets)]
        g = posed.gaussians
        s_min, s_max = scale_bounds(g.positions)
        # geometry is frozen, so the scale regularizer is a constant of the fit
        self.scale_penalty = self.weights.w_scale_reg * scale_reg(g.scales, s_min, s_max)
        self.fitted = np.unique(np.concatenate(self.visible))
        self.pixel_count = 3.0 * float(self.masks.sum())

    def _ssim_crop(self, view: ViewOperator, target: np.ndarray) -> tuple[slice, slice]:
        """Smallest window-padded box outside which render and target are both zero.

        SSIM windows lying entirely outside it compare two black patches, score
        exactly 1 and contribute no gradient.
        """
        h, w = self.shape
        live = (view.alpha > 0) | np.any(target != 0, axis=(2, 3))
        if not np.any(live):
            return slice(0, SSIM_WINDOW), slice(0, SSIM_WINDOW)
        rows, cols = np.flatnonzero(live.any(axis=1)), np.flatnonzero(live.any(axis=0))
        pad = SSIM_WINDOW - 1

        def span(lo, hi, n):
            lo, hi = max(0, lo - pad), min(n, hi + 1 + pad)
            if hi - lo < SSIM_WINDOW:
                lo = max(0, min(lo, n - SSIM_WINDOW))
                hi = lo + SSIM_WINDOW
            return slice(lo, hi)

        return span(rows[0], rows[-1], h), span(cols[0], cols[-1], w)

    def _batch_lights(self, fb):
        sel = np.flatnonzero(np.isin(self.light_frame, fb))
        pos = np.searchsorted(fb, self.light_frame[sel])
        s = np.zeros((len(sel), len(fb), 3))
        s[np.arange(len(sel)), pos] = self.light_intensity[sel]
        return sel, s

    def _lobes(self, ci, sel, lam):
        vis = self.visible[ci]
        groups = np.searchsorted(self.light_frame[sel], np.unique(self.light_frame[sel]))
        groups = np.append(groups, len(sel)).tolist()
        return _lobe_matrix(self.cosines[ci][:, sel], lam[vis], self.light_solid_angle[sel],
                            self.shading.analytic_sharp, groups)

    def _frames(self, frames_idx):
        if frames_idx is None:
            return np.arange(len(self.frames))
        fb = np.unique(np.asarray(frames_idx, dtype=np.int64))
        if len(fb) == 0 or fb[0] < 0 or fb[-1] >= len(self.frames):
            raise InvalidInputError("frame indices out of range")
        return fb

    def _view_forward(self, ci, p, diffuse, lam, sel, s):
        vis = self.visible[ci]
        nb = s.shape[1]
        m, dm = self._lobes(ci, sel, lam)
        spec = (m @ s.reshape(len(sel), nb * 3)).reshape(len(vis), nb, 3)
        wv = p.visibility[vis] * self.vis_factor[ci]
        pre = p.albedo[vis, None, :] * diffuse[vis] + wv[:, None, None] * spec
        img = (self.comp[ci] @ np.maximum(pre, 0.0).reshape(len(vis), nb * 3)).reshape(*self.shape, nb * 3)
        return img, (dm, spec, wv, pre)

    def _shared(self, p, fb):
        sel, s = self._batch_lights(fb)
        dfull = full_transfer(p.d_color, p.d_mono)
        diffuse = np.einsum("kic,fic->kfc", dfull, self.light_sh[fb])
        return diffuse, 1.0 / p.roughness**2, sel, s

    def preclamp(self, p: NaturalParams, frames_idx=None) -> list[np.ndarray]:
        """Pre-clamp colors ``(K_visible, F, 3)`` per camera."""
        fb = self._frames(frames_idx)
        diffuse, lam, sel, s = self._shared(p, fb)
        return [self._view_forward(ci, p, diffuse, lam, sel, s)[1][3] for ci in range(len(self.views))]

    def render(self, p: NaturalParams, frames_idx=None) -> np.ndarray:
        """Images ``(F, C, H, W, 3)`` for the selected frames."""
        fb = self._frames(frames_idx)
        diffuse, lam, sel, s = self._shared(p, fb)
        h, w = self.shape
        imgs = [self._view_forward(ci, p, diffuse, lam, sel, s)[0].reshape(h, w, len(fb), 3)
                for ci in range(len(self.views))]
        return np.stack(imgs).transpose(3, 0, 1, 2, 4)

    def value_and_grad(self, p: NaturalParams, frames_idx=None, want_grad: bool = True):
        """Loss, natural-parameter gradients and loss parts on a subset of frames (default all)."""
        fb = self._frames(frames_idx)
        nb = len(fb)
        nviews = len(self.views)
        wts = self.weights
        diffuse, lam, sel, s = self._shared(p, fb)
        h, w = self.shape
        full_windows = (h - SSIM_WINDOW + 1) * (w - SSIM_WINDOW + 1)
        rows = sum(len(v) for v in self.visible) * nb
        count = self.pixel_count * nb
        l1 = ssim_total = neg = 0.0
        k = self.k
        g_albedo, g_lam, g_vis = np.zeros((k, 3)), np.zeros(k), np.zeros(k)
        g_diffuse = np.zeros_like(diffuse)
        for ci, vis in enumerate(self.visible):
            img, (dm, spec, wv, pre) = self._view_forward(ci, p, diffuse, lam, sel, s)
            tgt = self.targets[ci][:, :, fb].reshape(h, w, nb * 3)
            m = self.masks[ci][:, :, None]
            r = img - tgt
            sign = np.sign(r)
            sign *= m
            l1 += float(np.vdot(sign, r))
            neg_part = np.maximum(0.0, -pre)
            neg += float(np.vdot(neg_part, neg_part))
            g_img = None
            if wts.w_ssim > 0 or not want_grad:
                cr, cc = self.crops[ci]
                val, g_ss = ssim_and_grad(img[cr, cc], tgt[cr, cc], want_grad=want_grad and wts.w_ssim > 0)
                share = ((cr.stop - cr.start - SSIM_WINDOW + 1) * (cc.stop - cc.start - SSIM_WINDOW + 1)
                         / full_windows)
                ssim_total += float(val) * share + (1.0 - share)
            if not want_grad:
                continue
            g_img = sign * (wts.w_l1 / count)
            if wts.w_ssim > 0:
                g_img[cr, cc] -= g_ss * (wts.w_ssim * share / nviews)
            g_pre = (self.comp[ci].T @ g_img.reshape(h * w, nb * 3)).reshape(len(vis), nb, 3)
            g_pre *= pre > 0
            g_pre -= neg_part * (2.0 * wts.w_negcolor / max(rows, 1))
            g_albedo[vis] += np.einsum("kfc,kfc->kc", g_pre, diffuse[vis])
            g_diffuse[vis] += g_pre * p.albedo[vis, None, :]
            g_vis[vis] += np.einsum("kfc,kfc->k", g_pre, spec) * self.vis_factor[ci]
            g_spec = g_pre * wv[:, None, None]
            t = g_spec.reshape(len(vis), nb * 3) @ s.reshape(len(sel), nb * 3).T
            g_lam[vis] += np.sum(dm * t, axis=1)
        l1 /= count
        neg /= max(rows, 1)
        ssim_loss = 1.0 - ssim_total / nviews
        total = wts.w_l1 * l1 + wts.w_negcolor * neg + self.scale_penalty
        if wts.w_ssim > 0 or not want_grad:
            total += wts.w_ssim * ssim_loss
        parts = {"l1": l1, "ssim": ssim_loss if (wts.w_ssim > 0 or not want_grad) else None,
                 "negcolor": neg, "scale_penalty": self.scale_penalty}
        if not want_grad:
            return total, None, parts
        g_full = np.einsum("kfc,fic->kic", g_diffuse, self.light_sh[fb])
        grads = {
            "albedo": g_albedo,
            "d_color": g_full[:, :N_COLOR_COEFFS, :],
            "d_mono": g_full[:, N_COLOR_COEFFS:, :].sum(axis=2),
            "roughness": g_lam * -2.0 / p.roughness**3,
            "visibility": g_vis,
        }
        return total, grads, parts


def neutral_init(k: int, order: int, albedo: float = 0.5, roughness: float = 0.5,
                 visibility: float = 0.1) -> NaturalParams:
    """Gray, direction-independent diffuse transfer with a weak broad lobe."""
    d_color = np.zeros((k, N_COLOR_COEFFS, 3))
    # constant part of a clamped-cosine transfer, (1/pi) * zonal_0 * Y_00
    d_color[:, 0, :] = clamped_cosine_zonal(order)[0] / math.pi
    return NaturalParams(np.full((k, 3), albedo), d_color, np.zeros((k, (order + 1) ** 2 - N_COLOR_COEFFS)),
                         np.full(k, roughness), np.full(k, visibility))


def lambertian_init(normals: np.ndarray, order: int, albedo: float = 0.5, roughness: float = 0.5,
                    visibility: float = 0.1) -> NaturalParams:
    """Unshadowed Lambertian transfer about the given normals."""
    t = TransferParams.lambertian(normals, albedo, order, roughness, visibility)
    return NaturalParams.from_transfer(t)


def least_squares_init(problem: TransferProblem, base: NaturalParams, ridge: float = 1e-3) -> NaturalParams:
    """Warm start from the unclamped linear model of the diffuse term.

    Ignoring the clamp, the diffuse image of channel c is ``W_v E_c Lambda_c``
    with ``E = albedo * transfer``.  The masked least-squares normal equations
    ``G E H + mu (E - E_base) = R`` separate in the eigenbasis of ``H``, leaving
    one sparse solve per eigenvalue.  The specular part of ``base`` is removed
    from the targets first and kept.  ``E`` is then split into albedo and
    transfer, with the mono bands averaged over channels.
    """
    fitted = problem.fitted
    nk = len(fitted)
    pos = np.full(problem.k, -1)
    pos[fitted] = np.arange(nk)
    ncoef = problem.light_sh.shape[1]
    nf = len(problem.frames)
    h, w = problem.shape
    # normal-equation pieces; specular of the base model is subtracted from the targets
    base_spec = NaturalParams(np.zeros_like(base.albedo), base.d_color, base.d_mono, base.roughness,
                              base.visibility)
    spec_imgs = problem.render(base_spec)
    g = sp.csr_matrix((nk, nk))
    rhs = np.zeros((nk, nf, 3))
    for ci, vis in enumerate(problem.visible):
        wv = problem.comp[ci]
        m = problem.masks[ci].ravel()
        wm = sp.diags(m) @ wv
        cols = pos[vis]
        expand = sp.csr_matrix((np.ones(len(vis)), (np.arange(len(vis)), cols)), shape=(len(vis), nk))
        g = g + expand.T @ (wv.T @ wm) @ expand
        t = problem.images[:, ci].transpose(1, 2, 0, 3) - spec_imgs[:, ci].transpose(1, 2, 0, 3)
        rhs[cols] += (wm.T @ t.reshape(h * w, nf * 3)).reshape(len(vis), nf, 3)
    e_base = base.albedo[fitted, None, :] * full_transfer(base.d_color, base.d_mono)[fitted]
    diag_mean = float(g.diagonal().mean()) if nk else 0.0
    e = e_base.copy()
    ident = sp.identity(nk, format="csc")
    for c in range(3):
        lam_c = problem.light_sh[:, :, c]  # (F, n)
        evals, evecs = np.linalg.eigh(lam_c.T @ lam_c)
        mu = ridge * diag_mean * max(float(evals.mean()), 1e-300)
        r = rhs[:, :, c] @ lam_c @ evecs + mu * e_base[:, :, c] @ evecs
        sol = np.empty((nk, ncoef))
        for j in range(ncoef):
            sol[:, j] = spsolve((evals[j] * g + mu * ident).tocsc(), r[:, j])
        e[:, :, c] = sol @ evecs.T
    out = NaturalParams(base.albedo.copy(), base.d_color.copy(), base.d_mono.copy(),
                        base.roughness.copy(), base.visibility.copy())
    e0 = e[:, 0, :]
    mean0 = e0.mean(axis=1, keepdims=True)
    rho = np.where(mean0 > 1e-8, 0.5 * e0 / np.where(mean0 > 1e-8, mean0, 1.0), 0.5)
    rho = np.clip(rho, 0.05, 0.95)
    out.albedo[fitted] = rho
    out.d_color[fitted] = e[:, :N_COLOR_COEFFS, :] / rho[:, None, :]
    out.d_mono[fitted] = np.mean(e[:, N_COLOR_COEFFS:, :] / rho[:, None, :], axis=2)
    return out


@dataclass
class TransferFitResult:
    transfer: TransferParams
    report: FitReport


def fit_transfer(
    avatar: Avatar | PosedAvatar,
    images: np.ndarray,
    frames: list[PointLightSet],
    cameras: list[Camera],
    masks: np.ndarray | None = None,
    config: FitConfig | None = None,
    init: str | TransferParams = "least_squares",
    shading: ShadingConfig | None = None,
    batch_frames: int = 16,
) -> TransferFitResult:
    """Fit transfer parameters to images ``(F, C, H, W, 3)`` lit by known ``frames``.

    ``init`` is a TransferParams, "neutral" (gray, direction-independent),
    "lambertian" (about the posed normals) or "least_squares" (the neutral start
    warm-started by :func:`least_squares_init`).  Each iteration uses
    ``batch_frames`` frames drawn without replacement from a seeded shuffle
    (0 means all frames).  Gaussians no camera sees keep their initial values.
    Returns transfer rows for the posed Gaussians.
    """
    config = config or transfer_fit_defaults()
    posed = avatar if isinstance(avatar, PosedAvatar) else pose_avatar(avatar)
    nf = len(frames)
    if nf == 0:
        raise InvalidInputError("at least one lighting condition is required")
    if _distinct_conditions(frames) < 2:
        warnings.warn("a single lighting condition cannot separate diffuse and specular transfer",
                      RuntimeWarning, stacklevel=2)
    tr = posed.transfer
    order = tr.order
    k = len(tr)
    if isinstance(init, TransferParams):
        if len(init) != k or init.order != order:
            raise InvalidInputError("initial transfer does not match the avatar")
        start = NaturalParams.from_transfer(init)
    elif init in ("neutral", "least_squares"):
        start = neutral_init(k, order)
    elif init == "lambertian":
        start = lambertian_init(posed.normals, order)
    else:
        raise InvalidInputError(f"unknown transfer init {init!r}")
    rng = np.random.default_rng(config.seed)
    batch = nf if batch_frames <= 0 else min(batch_frames, nf)
    with serial_reductions(config.deterministic):
        views = build_views(posed, cameras, shading)
        problem = TransferProblem(posed, views, frames, images, masks, config.weights, shading)
        if init == "least_squares":
            start = least_squares_init(problem, start)
        u = to_unconstrained(start)
        opt = Adam(config.beta1, config.beta2, config.eps)
        fitted = problem.fitted
        losses = []
        order_queue: list[int] = []
        for it in range(config.iterations):
            if len(order_queue) < batch:
                order_queue.extend(rng.permutation(nf).tolist())
            fb, order_queue = order_queue[:batch], order_queue[batch:]
            p = to_natural(u)
            loss, grads, _ = problem.value_and_grad(p, fb)
            if not math.isfinite(loss) or not all(np.all(np.isfinite(v)) for v in grads.values()):
                raise DivergenceError(f"transfer fit diverged at iteration {it}", iteration=it)
            losses.append(loss)
            gu = chain_to_unconstrained(u, grads)
            sub = {name: u[name][fitted] for name in u}
            opt.step(sub, {name: gu[name][fitted] for name in gu}, config.lr_at(it))
            for name in u:
                u[name][fitted] = sub[name]
        p = to_natural(u) if config.iterations else start
        final, _, parts = problem.value_and_grad(p, want_grad=False)
        if not math.isfinite(final):
            raise DivergenceError("transfer fit produced a non-finite loss", iteration=config.iterations)
        losses.append(final)
        rendered = problem.render(p)
    metrics = {
        "loss": final,
        **parts,
        "psnr": psnr(rendered, problem.images, np.broadcast_to(problem.masks[None], rendered.shape[:-1])),
        "fitted_gaussians": int(len(fitted)),
        "frames": nf,
        "batch_frames": batch,
        "iterations": config.iterations,
        "mean_visibility": float(np.mean(p.visibility[fitted])) if len(fitted) else 0.0,
    }
    report = FitReport(losses, metrics, {**config.to_dict(), "init": init if isinstance(init, str) else "given"},
                       config.seed)
    return TransferFitResult(p.to_transfer(tr.normal_offset), report)


def _distinct_conditions(frames: list[PointLightSet]) -> int:
    keys = {(f.directions.round(9).tobytes(), f.intensities.round(9).tobytes()) for f in frames}
    return len(keys)


def relight_transfer(posed: PosedAvatar, transfer: TransferParams, cameras: list[Camera],
                     lights: PointLightSet, shading: ShadingConfig | None = None) -> np.ndarray:
    """Render ``(C, H, W, 3)`` of the posed geometry with a replacement transfer."""
    from gprt.render import render_avatar

    view = PosedAvatar(posed.gaussians, posed.normals, transfer, posed.index)
    return np.stack([render_avatar(view, lights, cam, config=shading).target.rgb for cam in cameras])

