"""Numba compositing kernels.

All kernels receive splats already culled and sorted front to back, and share
one per-splat skip test (``power < log_thresh``), so the reference and tiled
paths perform the same floating-point operations for every pixel.
"""

import math

import numpy as np
from numba import njit, prange


@njit(cache=True)
def bin_tiles(px0, px1, py0, py1, tile, ntx, nty):
    """Per-tile splat lists (CSR), each list in the global sorted order."""
    n = px0.shape[0]
    counts = np.zeros(ntx * nty + 1, dtype=np.int64)
    for g in range(n):
        tx0 = max(px0[g] // tile, 0)
        tx1 = min(px1[g] // tile, ntx - 1)
        ty0 = max(py0[g] // tile, 0)
        ty1 = min(py1[g] // tile, nty - 1)
        for ty in range(ty0, ty1 + 1):
            for tx in range(tx0, tx1 + 1):
                counts[ty * ntx + tx + 1] += 1
    offsets = np.cumsum(counts)
    fill = offsets[:-1].copy()
    ids = np.empty(offsets[-1], dtype=np.int64)
    for g in range(n):
        tx0 = max(px0[g] // tile, 0)
        tx1 = min(px1[g] // tile, ntx - 1)
        ty0 = max(py0[g] // tile, 0)
        ty1 = min(py1[g] // tile, nty - 1)
        for ty in range(ty0, ty1 + 1):
            for tx in range(tx0, tx1 + 1):
                t = ty * ntx + tx
                ids[fill[t]] = g
                fill[t] += 1
    return offsets, ids


@njit(cache=True, inline="always")
def _splat_alpha(g, fx, fy, mx, my, ca, cb, cc, op, log_thresh, alpha_clamp):
    dx = fx - mx[g]
    dy = fy - my[g]
    power = -0.5 * (ca[g] * dx * dx + cc[g] * dy * dy) - cb[g] * dx * dy
    if power < log_thresh[g]:
        return 0.0
    return min(alpha_clamp, op[g] * math.exp(power))


@njit(parallel=True, cache=True)
def composite_reference(mx, my, ca, cb, cc, op, log_thresh, colors, width, height,
                        alpha_clamp, t_min, out, out_t):
    n = mx.shape[0]
    nc = colors.shape[1]
    for py in prange(height):
        fy = py + 0.5
        for px in range(width):
            fx = px + 0.5
            t = 1.0
            for g in range(n):
                a = _splat_alpha(g, fx, fy, mx, my, ca, cb, cc, op, log_thresh, alpha_clamp)
                if a == 0.0:
                    continue
                w = a * t
                for c in range(nc):
                    out[py, px, c] += colors[g, c] * w
                t *= 1.0 - a
                if t < t_min:
                    break
            out_t[py, px] = t


@njit(parallel=True, cache=True)
def composite_tiled(offsets, ids, mx, my, ca, cb, cc, op, log_thresh, colors, width, height,
                    tile, ntx, alpha_clamp, t_min, out, out_t):
    nc = colors.shape[1]
    n_tiles = offsets.shape[0] - 1
    for ti in prange(n_tiles):
        x0 = (ti % ntx) * tile
        y0 = (ti // ntx) * tile
        start = offsets[ti]
        stop = offsets[ti + 1]
        for py in range(y0, min(y0 + tile, height)):
            fy = py + 0.5
            for px in range(x0, min(x0 + tile, width)):
                fx = px + 0.5
                t = 1.0
                for k in range(start, stop):
                    g = ids[k]
                    a = _splat_alpha(g, fx, fy, mx, my, ca, cb, cc, op, log_thresh, alpha_clamp)
                    if a == 0.0:
                        continue
                    w = a * t
                    for c in range(nc):
                        out[py, px, c] += colors[g, c] * w
                    t *= 1.0 - a
                    if t < t_min:
                        break
                out_t[py, px] = t


@njit(parallel=True, cache=True)
def tiled_weights(offsets, ids, mx, my, ca, cb, cc, op, log_thresh, width, height,
                  tile, ntx, alpha_clamp, t_min, indptr, cols, vals, count_only):
    """Per-pixel compositing weights ``alpha_k * T_k``.

    With ``count_only`` set, writes contribution counts into ``indptr[1:]``;
    otherwise fills ``cols``/``vals`` at the offsets given by ``indptr``.
    """
    n_tiles = offsets.shape[0] - 1
    for ti in prange(n_tiles):
        x0 = (ti % ntx) * tile
        y0 = (ti // ntx) * tile
        start = offsets[ti]
        stop = offsets[ti + 1]
        for py in range(y0, min(y0 + tile, height)):
            fy = py + 0.5
            for px in range(x0, min(x0 + tile, width)):
                fx = px + 0.5
                pix = py * width + px
                pos = 0 if count_only else indptr[pix]
                t = 1.0
                for k in range(start, stop):
                    g = ids[k]
                    a = _splat_alpha(g, fx, fy, mx, my, ca, cb, cc, op, log_thresh, alpha_clamp)
                    if a == 0.0:
                        continue
                    if not count_only:
                        cols[pos] = g
                        vals[pos] = a * t
                    pos += 1
                    t *= 1.0 - a
                    if t < t_min:
                        break
                if count_only:
                    indptr[pix + 1] = pos
