"""Real spherical harmonics.

Convention: real orthonormal basis without the Condon-Shortley phase, so that
band 1 reads ``Y = c * (y, z, x)`` for ``m = -1, 0, 1``.  Coefficients are
stored band-major: index ``l*l + l + m``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from gprt.errors import InvalidInputError, UnsupportedOrderError

MAX_ORDER = 8
MAX_CLAMPED_COSINE_ORDER = 4
DEFAULT_ORDER = 3
UNIT_TOL = 1e-6


def num_coeffs(order: int) -> int:
    return (order + 1) ** 2


def sh_index(l: int, m: int) -> int:
    return l * l + l + m


def band_of_index(order: int) -> np.ndarray:
    """Band number ``l`` for every coefficient slot up to ``order``."""
    return np.concatenate([np.full(2 * l + 1, l) for l in range(order + 1)])


@dataclass
class SHCoeffs:
    """SH expansion of a scalar (1 channel) or RGB (3 channel) spherical function.

    ``values`` has shape ``(num_coeffs(order), channels)``.
    """

    order: int
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        if self.order < 0:
            raise InvalidInputError(f"SH order must be >= 0, got {self.order}")
        if values.shape[0] != num_coeffs(self.order) or values.shape[1] not in (1, 3):
            raise InvalidInputError(
                f"expected ({num_coeffs(self.order)}, 1|3) coefficients, got {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("SH coefficients must be finite")
        self.values = values

    @property
    def channels(self) -> int:
        return self.values.shape[1]

    def truncate(self, order: int) -> "SHCoeffs":
        if order > self.order:
            raise InvalidInputError(f"cannot truncate order {self.order} to {order}")
        return SHCoeffs(order, self.values[: num_coeffs(order)].copy())


def _check_order(order: int, limit: int = MAX_ORDER) -> None:
    if int(order) != order or order < 0:
        raise InvalidInputError(f"SH order must be a non-negative integer, got {order!r}")
    if order > limit:
        raise UnsupportedOrderError(f"SH order {order} exceeds the supported maximum {limit}")


def _as_unit_dirs(dirs, name: str = "direction") -> np.ndarray:
    d = np.asarray(dirs, dtype=np.float64)
    if d.shape[-1] != 3:
        raise InvalidInputError(f"{name} must have a trailing dimension of 3, got {d.shape}")
    norms = np.linalg.norm(d, axis=-1)
    if not np.all(np.abs(norms - 1.0) <= UNIT_TOL):
        raise InvalidInputError(f"{name} must be unit length within {UNIT_TOL}")
    return d


def sh_basis(dirs: np.ndarray, order: int) -> np.ndarray:
    """Evaluate all basis functions up to ``order`` for an array of unit directions.

    Returns an array of shape ``dirs.shape[:-1] + (num_coeffs(order),)``.  Inputs
    are not validated; use :func:`eval_sh_basis` for checked access.
    """
    d = np.asarray(dirs, dtype=np.float64)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    out = np.empty(d.shape[:-1] + (num_coeffs(order),))

    # (x + iy)^m carries the sin^m(theta) factor and the azimuthal dependence,
    # which leaves a polynomial in z for the Legendre part.
    re = np.ones_like(x)
    im = np.zeros_like(x)
    for m in range(order + 1):
        if m > 0:
            re, im = re * x - im * y, re * y + im * x
        # P~_m^m = (2m-1)!!, then upward recurrence in l
        p_prev2 = None
        p_prev = np.full_like(z, float(_double_factorial(2 * m - 1)))
        for l in range(m, order + 1):
            if l == m:
                p = p_prev
            elif l == m + 1:
                p = z * (2 * m + 1) * p_prev
            else:
                p = ((2 * l - 1) * z * p_prev - (l + m - 1) * p_prev2) / (l - m)
            if l > m:
                p_prev2, p_prev = p_prev, p
            k = math.sqrt((2 * l + 1) / (4 * math.pi) * math.factorial(l - m) / math.factorial(l + m))
            if m == 0:
                out[..., sh_index(l, 0)] = k * p
            else:
                out[..., sh_index(l, m)] = math.sqrt(2.0) * k * p * re
                out[..., sh_index(l, -m)] = math.sqrt(2.0) * k * p * im
    return out


def _double_factorial(n: int) -> int:
    result = 1
    while n > 1:
        result *= n
        n -= 2
    return result


def eval_sh_basis(direction, order: int = DEFAULT_ORDER) -> np.ndarray:
    """Real orthonormal SH basis values at a unit direction, band-major."""
    _check_order(order)
    d = _as_unit_dirs(direction)
    return sh_basis(d, order)


def project_sphere_fn(
    dirs,
    values,
    weights,
    order: int = DEFAULT_ORDER,
    *,
    check_weights: bool = True,
) -> SHCoeffs:
    """Project sampled spherical function values onto the SH basis.

    ``c_i = sum_s w_s f(w_s) Y_i(w_s)``.  ``values`` is either ``(S,)`` or
    ``(S, 3)``; ``weights`` are per-sample solid angles and must sum to 4*pi
    within 1% unless ``check_weights`` is off (partial light sets).
    """
    _check_order(order)
    d = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    if d.shape[0] == 0:
        raise InvalidInputError("cannot project an empty sample list")
    d = _as_unit_dirs(d, "sample direction")
    f = np.asarray(values, dtype=np.float64)
    if f.ndim == 1:
        f = f[:, None]
    w = np.broadcast_to(np.asarray(weights, dtype=np.float64), (d.shape[0],))
    if f.shape[0] != d.shape[0]:
        raise InvalidInputError("values and directions must have the same length")
    if check_weights and abs(w.sum() - 4 * math.pi) > 0.01 * 4 * math.pi:
        raise InvalidInputError(f"sample weights sum to {w.sum():.4f}, expected 4*pi within 1%")
    basis = sh_basis(d, order)
    coeffs = np.einsum("si,s,sc->ic", basis, w, f, optimize=False)
    return SHCoeffs(order, coeffs)


def clamped_cosine_zonal(order: int) -> np.ndarray:
    """Zonal coefficients of max(0, cos(theta)) about +z, one per band."""
    z = np.zeros(order + 1)
    for l in range(order + 1):
        # integral_0^1 t P_l(t) dt
        if l == 0:
            moment = 0.5
        elif l == 1:
            moment = 1.0 / 3.0
        elif l % 2 == 1:
            moment = 0.0
        else:
            h = l // 2
            moment = (-1) ** (h + 1) * math.factorial(l - 2) / (
                2**l * math.factorial(h - 1) * math.factorial(h + 1)
            )
        z[l] = 2 * math.pi * math.sqrt((2 * l + 1) / (4 * math.pi)) * moment
    return z


def clamped_cosine_coeffs(normal, order: int = DEFAULT_ORDER) -> SHCoeffs:
    """SH coefficients of the clamped cosine lobe max(0, n . w) about ``normal``."""
    _check_order(order, MAX_CLAMPED_COSINE_ORDER)
    n = _as_unit_dirs(normal, "normal")
    return SHCoeffs(order, clamped_cosine_batch(n.reshape(1, 3), order)[0][:, None])


def clamped_cosine_batch(normals: np.ndarray, order: int) -> np.ndarray:
    """Vectorized clamped-cosine coefficients, shape ``(K, num_coeffs(order))``.

    Rotating a zonal lobe to axis n gives ``c_lm = sqrt(4pi/(2l+1)) z_l Y_lm(n)``.
    """
    zonal = clamped_cosine_zonal(order)
    bands = band_of_index(order)
    scale = np.sqrt(4 * math.pi / (2 * bands + 1)) * zonal[bands]
    return sh_basis(normals, order) * scale
