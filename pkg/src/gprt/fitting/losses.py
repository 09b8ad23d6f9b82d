"""Image and regularization losses, each with an analytic gradient.

SSIM uses an 11x11 Gaussian window (sigma 1.5), k1 = 0.01, k2 = 0.03 and a data
range of 1.  Statistics are taken over "valid" windows only (no padding),
averaged over window positions and channels.
"""

from __future__ import annotations

import functools
import math

import numpy as np
from scipy.spatial import cKDTree

from gprt.errors import InvalidInputError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
S_MIN = 1e-4
S_MAX_SPACING_FACTOR = 10.0


def loss_l1(img, ref, mask=None) -> float:
    """Mean absolute difference over masked pixels and channels."""
    value, _ = l1_and_grad(img, ref, mask)
    return value


def l1_and_grad(img, ref, mask=None) -> tuple[float, np.ndarray]:
    img = np.asarray(img, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if img.shape != ref.shape:
        raise InvalidInputError(f"image shapes differ: {img.shape} vs {ref.shape}")
    diff = img - ref
    if mask is None:
        count = float(img.size)
        if count == 0:
            raise InvalidInputError("mask selects no pixels")
        return float(np.abs(diff).sum()) / count, np.sign(diff) / count
    weight = np.asarray(mask, dtype=np.float64)
    if weight.shape != img.shape[: weight.ndim]:
        raise InvalidInputError("mask shape does not match the image")
    w = weight.reshape(weight.shape + (1,) * (img.ndim - weight.ndim))
    count = float(weight.sum()) * (img.size / weight.size)
    if not count > 0:
        raise InvalidInputError("mask selects no pixels")
    grad = np.sign(diff)
    grad *= w
    value = float(np.vdot(grad, diff)) / count
    grad /= count
    return value, grad


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    w = np.exp(-0.5 * (x / sigma) ** 2)
    return w / w.sum()


@functools.lru_cache(maxsize=32)
def _band_matrix(n: int) -> np.ndarray:
    """``(n - 10, n)`` matrix applying the valid window correlation along one axis."""
    w = gaussian_window()
    m = len(w)
    out = np.zeros((n - m + 1, n))
    for t in range(m):
        out[np.arange(n - m + 1), np.arange(n - m + 1) + t] = w[t]
    out.setflags(write=False)
    return out


def _apply_axes(x: np.ndarray, fh: np.ndarray, fw: np.ndarray) -> np.ndarray:
    """``fh`` along axis -3 and ``fw`` along axis -2 of ``(..., H, W, C)``."""
    lead, (h, w, c) = x.shape[:-3], x.shape[-3:]
    x = x.reshape((-1, h, w * c))
    y = np.matmul(fh, x).reshape(-1, fh.shape[0], w, c)
    y = np.matmul(fw, y)
    return y.reshape(lead + y.shape[1:])


def _filter_valid(x: np.ndarray) -> np.ndarray:
    """Separable window correlation over axes (-3, -2), valid part only."""
    return _apply_axes(x, _band_matrix(x.shape[-3]), _band_matrix(x.shape[-2]))


def _filter_adjoint(y: np.ndarray) -> np.ndarray:
    m = SSIM_WINDOW - 1
    return _apply_axes(y, _band_matrix(y.shape[-3] + m).T, _band_matrix(y.shape[-2] + m).T)


def _as_hwc(img: np.ndarray) -> np.ndarray:
    return img[..., None] if img.ndim == 2 else img


def ssim_and_grad(img, ref, *, want_grad: bool = True) -> tuple[np.ndarray, np.ndarray | None]:
    """Mean SSIM per image and its gradient with respect to ``img``.

    Inputs are ``(..., H, W, C)`` (or a single ``(H, W)``); leading dimensions are
    independent images.  Returns ``ssim`` of shape ``(...)``.
    """
    x = _as_hwc(np.asarray(img, dtype=np.float64))
    y = _as_hwc(np.asarray(ref, dtype=np.float64))
    if x.shape != y.shape:
        raise InvalidInputError(f"image shapes differ: {x.shape} vs {y.shape}")
    if x.shape[-3] < SSIM_WINDOW or x.shape[-2] < SSIM_WINDOW:
        raise InvalidInputError(f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW}")
    c1 = SSIM_K1**2
    c2 = SSIM_K2**2
    mx = _filter_valid(x)
    my = _filter_valid(y)
    sxx = _filter_valid(x * x) - mx * mx
    syy = _filter_valid(y * y) - my * my
    sxy = _filter_valid(x * y) - mx * my
    a1 = 2 * mx * my + c1
    a2 = 2 * sxy + c2
    b1 = mx * mx + my * my + c1
    b2 = sxx + syy + c2
    smap = a1 * a2 / (b1 * b2)
    count = np.prod(smap.shape[-3:])
    value = smap.reshape(smap.shape[:-3] + (-1,)).mean(axis=-1)
    if not want_grad:
        return value, None
    d_mx = 2 * my * a2 / (b1 * b2) - smap * 2 * mx / b1
    d_sxx = -smap / b2
    d_sxy = 2 * a1 / (b1 * b2)
    g_mean = d_mx - 2 * mx * d_sxx - my * d_sxy
    grad = (_filter_adjoint(g_mean) + 2 * x * _filter_adjoint(d_sxx)
            + y * _filter_adjoint(d_sxy)) / count
    return value, grad.reshape(np.shape(img))


def loss_ssim(img, ref) -> float:
    """``1 - mean SSIM`` for one single- or three-channel image pair."""
    value, _ = ssim_and_grad(img, ref, want_grad=False)
    return float(1.0 - value)


def loss_geometry(pred_vertices, tracked_vertices) -> float:
    """Mean squared Euclidean distance between corresponding vertices."""
    p = np.asarray(pred_vertices, dtype=np.float64).reshape(-1, 3)
    t = np.asarray(tracked_vertices, dtype=np.float64).reshape(-1, 3)
    if p.shape != t.shape:
        raise InvalidInputError(f"vertex counts differ: {len(p)} vs {len(t)}")
    if len(p) == 0:
        return 0.0
    return float(np.mean(np.sum((p - t) ** 2, axis=1)))


def loss_alpha(render_alpha, matte) -> float:
    a = np.asarray(render_alpha, dtype=np.float64)
    m = np.asarray(matte, dtype=np.float64)
    if a.shape != m.shape:
        raise InvalidInputError(f"alpha shapes differ: {a.shape} vs {m.shape}")
    return float(np.mean(np.abs(a - m)))


def scale_bounds(positions: np.ndarray) -> tuple[float, float]:
    """``(s_min, s_max)`` with s_max ten times the median nearest-neighbour spacing."""
    pos = np.asarray(positions, dtype=np.float64)
    if len(pos) < 2:
        return S_MIN, math.inf
    dist, _ = cKDTree(pos).query(pos, k=2)
    return S_MIN, S_MAX_SPACING_FACTOR * float(np.median(dist[:, 1]))


def scale_reg(scales, s_min: float, s_max: float) -> float:
    """Squared violation of ``[s_min, s_max]``, summed over axes, mean over Gaussians."""
    s = np.asarray(scales, dtype=np.float64).reshape(-1, 3)
    if len(s) == 0:
        return 0.0
    over = np.maximum(0.0, s - s_max)
    under = np.maximum(0.0, s_min - s)
    return float(np.mean(np.sum(over**2 + under**2, axis=1)))


def scale_reg_grad(scales, s_min: float, s_max: float) -> np.ndarray:
    s = np.asarray(scales, dtype=np.float64).reshape(-1, 3)
    return (2 * np.maximum(0.0, s - s_max) - 2 * np.maximum(0.0, s_min - s)) / max(len(s), 1)


def negcolor_reg_and_grad(colors_preclamp) -> tuple[float, np.ndarray]:
    """Squared negative part, summed over channels, mean over color rows."""
    c = np.asarray(colors_preclamp, dtype=np.float64)
    rows = max(c.size // c.shape[-1], 1) if c.size else 1
    neg = np.maximum(0.0, -c)
    return float(np.sum(neg**2) / rows), -2.0 * neg / rows


def reg_terms(scales, colors_preclamp, *, w_scale: float = 0.01, w_negcolor: float = 0.01,
              s_min: float | None = None, s_max: float | None = None, positions=None) -> float:
    """Weighted scale and negative-color regularizers.

    Scale bounds default to :func:`scale_bounds` of ``positions`` when given.
    """
    if s_min is None or s_max is None:
        lo, hi = scale_bounds(positions) if positions is not None else (S_MIN, math.inf)
        s_min = lo if s_min is None else s_min
        s_max = hi if s_max is None else s_max
    neg, _ = negcolor_reg_and_grad(colors_preclamp)
    return w_scale * scale_reg(scales, s_min, s_max) + w_negcolor * neg


def psnr(img, ref, mask=None) -> float:
    """``10 log10(1 / MSE)`` on unit-range linear images, optionally masked."""
    img = np.asarray(img, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    sq = (img - ref) ** 2
    if mask is not None:
        m = np.asarray(mask, dtype=np.float64)
        m = m.reshape(m.shape + (1,) * (sq.ndim - m.ndim))
        mse = float(np.sum(sq * m) / (np.sum(m) * (sq.size / m.size)))
    else:
        mse = float(np.mean(sq))
    return math.inf if mse == 0 else 10.0 * math.log10(1.0 / mse)
