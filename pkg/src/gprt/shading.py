"""Per-Gaussian outgoing radiance: SH diffuse transfer plus SG specular.

    c_k = rho_k * sum_i L_i d_k^i  +  v_k * int L(w) G(w; a_k, 1/sigma_k^2) dw
    a_k = 2 (w_o . n_k) n_k - w_o,   n_k = normalize(n_hat_k + dn_k)

Transfer bands 0-1 carry one coefficient per RGB channel (``d_color``); bands
2..n share a single monochrome coefficient (``d_mono``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gprt.errors import InvalidInputError
from gprt.lighting import PointLightSet, pointlights_to_sh
from gprt.sh_math import SHCoeffs, clamped_cosine_batch, num_coeffs
from gprt.sph_gaussian import SHARP_LOBE_THRESHOLD, sg_solid_integral

N_COLOR_COEFFS = 4
SCHLICK_F0 = 0.04
_CHUNK = 8192


@dataclass
class ShadingConfig:
    sh_order: int = 3
    # modulate visibility by F0 + (1 - F0) (1 - w_o.n)^5
    schlick_visibility: bool = False
    # replace the light sum for lobes sharper than SHARP_LOBE_THRESHOLD
    analytic_sharp: bool = False


@dataclass
class TransferParams:
    """Appearance of K Gaussians, one row each.

    The position offset of each Gaussian is geometry and lives on its anchor.
    """

    albedo: np.ndarray
    d_color: np.ndarray
    d_mono: np.ndarray
    roughness: np.ndarray
    visibility: np.ndarray
    normal_offset: np.ndarray | None = None

    def __post_init__(self):
        self.albedo = np.asarray(self.albedo, dtype=np.float64).reshape(-1, 3)
        k = len(self.albedo)
        self.d_color = np.asarray(self.d_color, dtype=np.float64).reshape(k, N_COLOR_COEFFS, 3)
        self.d_mono = np.asarray(self.d_mono, dtype=np.float64).reshape(k, -1)
        self.roughness = np.asarray(self.roughness, dtype=np.float64).reshape(k)
        self.visibility = np.asarray(self.visibility, dtype=np.float64).reshape(k)
        self.normal_offset = (np.zeros((k, 3)) if self.normal_offset is None
                              else np.asarray(self.normal_offset, dtype=np.float64).reshape(k, 3))
        order = int(round(np.sqrt(self.d_mono.shape[1] + N_COLOR_COEFFS))) - 1
        if num_coeffs(order) != self.d_mono.shape[1] + N_COLOR_COEFFS or order < 1:
            raise InvalidInputError(f"d_mono width {self.d_mono.shape[1]} does not match any SH order >= 1")
        if np.any((self.albedo < 0) | (self.albedo > 1)):
            raise InvalidInputError("albedo must lie in [0, 1]")
        if np.any(~(self.roughness > 0) | (self.roughness > 1)):
            raise InvalidInputError("roughness must lie in (0, 1]")
        if np.any((self.visibility < 0) | (self.visibility > 1)):
            raise InvalidInputError("visibility must lie in [0, 1]")
        for name in ("d_color", "d_mono", "normal_offset"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise InvalidInputError(f"{name} must be finite")

    def __len__(self) -> int:
        return len(self.albedo)

    @property
    def order(self) -> int:
        return int(round(np.sqrt(self.d_mono.shape[1] + N_COLOR_COEFFS))) - 1

    def full_transfer(self) -> np.ndarray:
        return full_transfer(self.d_color, self.d_mono)

    def subset(self, index) -> "TransferParams":
        return TransferParams(self.albedo[index], self.d_color[index], self.d_mono[index],
                              self.roughness[index], self.visibility[index],
                              self.normal_offset[index])

    def replace(self, **changes) -> "TransferParams":
        fields = dict(albedo=self.albedo, d_color=self.d_color, d_mono=self.d_mono,
                      roughness=self.roughness, visibility=self.visibility,
                      normal_offset=self.normal_offset)
        fields.update(changes)
        return TransferParams(**fields)

    @classmethod
    def lambertian(cls, normals: np.ndarray, albedo, order: int = 3, roughness=0.5,
                   visibility=0.0) -> "TransferParams":
        """Transfer of an unshadowed Lambertian surface: ``(1/pi) * clamped cosine``."""
        normals = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
        k = len(normals)
        d = clamped_cosine_batch(normals, order) / np.pi
        return cls(
            albedo=np.broadcast_to(np.asarray(albedo, dtype=np.float64), (k, 3)),
            d_color=np.repeat(d[:, :N_COLOR_COEFFS, None], 3, axis=2),
            d_mono=d[:, N_COLOR_COEFFS:],
            roughness=np.broadcast_to(np.asarray(roughness, dtype=np.float64), (k,)),
            visibility=np.broadcast_to(np.asarray(visibility, dtype=np.float64), (k,)),
        )


def full_transfer(d_color: np.ndarray, d_mono: np.ndarray) -> np.ndarray:
    """Expand to ``(K, num_coeffs, 3)`` with the mono bands replicated per channel."""
    mono = np.repeat(np.asarray(d_mono)[:, :, None], 3, axis=2)
    return np.concatenate([np.asarray(d_color), mono], axis=1)


def _light_vector(light_sh: SHCoeffs, order: int) -> np.ndarray:
    if light_sh.order < order:
        raise InvalidInputError(f"light SH order {light_sh.order} is below the transfer order {order}")
    vals = light_sh.values[: num_coeffs(order)]
    return np.repeat(vals, 3, axis=1) if vals.shape[1] == 1 else vals


def shade_diffuse(albedo, d_color, d_mono, light_sh: SHCoeffs) -> np.ndarray:
    """``rho * sum_i L_i d_i`` per channel; may be negative from SH ringing."""
    single = np.ndim(albedo) == 1
    albedo = np.asarray(albedo, dtype=np.float64).reshape(-1, 3)
    k = len(albedo)
    d_color = np.asarray(d_color, dtype=np.float64).reshape(k, N_COLOR_COEFFS, 3)
    d_mono = np.asarray(d_mono, dtype=np.float64).reshape(k, -1)
    order = int(round(np.sqrt(d_mono.shape[1] + N_COLOR_COEFFS))) - 1
    if num_coeffs(order) != d_mono.shape[1] + N_COLOR_COEFFS:
        raise InvalidInputError("transfer coefficient count does not match an SH order")
    light = _light_vector(light_sh, order)
    out = albedo * (
        np.einsum("kic,ic->kc", d_color, light[:N_COLOR_COEFFS])
        + (d_mono @ light[N_COLOR_COEFFS:])
    )
    return out[0] if single else out


def reflect(wo, n) -> np.ndarray:
    wo = np.asarray(wo, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    return 2.0 * np.sum(wo * n, axis=-1, keepdims=True) * n - wo


def compose_normals(base_normals, normal_offset) -> np.ndarray:
    n = np.asarray(base_normals, dtype=np.float64) + normal_offset
    norm = np.linalg.norm(n, axis=-1, keepdims=True)
    if np.any(norm < 1e-12):
        raise InvalidInputError("normal offset cancels the base normal")
    return n / norm


def _check_unit(v, name):
    if np.any(np.abs(np.linalg.norm(v, axis=-1) - 1.0) > 1e-6):
        raise InvalidInputError(f"{name} must be unit length")


@dataclass
class SpecularTerms:
    """Intermediate quantities shared by shading and its gradients."""

    axes: np.ndarray
    sharpness: np.ndarray
    weight: np.ndarray
    # integral of L * G per Gaussian, before the visibility factor
    integral: np.ndarray


def specular_terms(params: TransferParams, normals, wo, lights: PointLightSet,
                   config: ShadingConfig | None = None) -> SpecularTerms:
    config = config or ShadingConfig()
    k = len(params)
    normals = np.broadcast_to(np.asarray(normals, dtype=np.float64), (k, 3))
    wo = np.broadcast_to(np.asarray(wo, dtype=np.float64), (k, 3))
    _check_unit(wo, "view direction")
    n = compose_normals(normals, params.normal_offset)
    axes = reflect(wo, n)
    lam = 1.0 / params.roughness**2
    weight = params.visibility.copy()
    if config.schlick_visibility:
        weight = weight * schlick_factor(n, wo)
    integral = np.zeros((k, 3))
    if len(lights):
        for s in range(0, k, _CHUNK):
            m = specular_light_matrix(axes[s:s + _CHUNK], lam[s:s + _CHUNK], lights.directions,
                                      lights.solid_angle, config.analytic_sharp)
            integral[s:s + _CHUNK] = m @ lights.intensities
    return SpecularTerms(axes, lam, weight, integral)


def schlick_factor(normals, wo) -> np.ndarray:
    cos = np.clip(np.sum(wo * normals, axis=1), 0.0, 1.0)
    return SCHLICK_F0 + (1.0 - SCHLICK_F0) * (1.0 - cos) ** 5


def specular_light_matrix(axes, sharpness, directions, solid_angle: float,
                          analytic_sharp: bool = False) -> np.ndarray:
    """``M[k, j]`` such that the SG integral of lobe k is ``M @ intensities``.

    With ``analytic_sharp`` a lobe sharper than the lattice can resolve takes the
    closed-form lobe integral at its nearest light instead of the light sum.
    """
    cosines = axes @ directions.T
    m = np.exp(sharpness[:, None] * (cosines - 1.0)) * solid_angle
    if analytic_sharp:
        sharp = np.flatnonzero(sharpness > SHARP_LOBE_THRESHOLD)
        if len(sharp):
            nearest = np.argmax(cosines[sharp], axis=1)
            m[sharp] = 0.0
            m[sharp, nearest] = sg_solid_integral(sharpness[sharp])
    return m


def shade_specular(params: TransferParams, normals, wo, lights: PointLightSet,
                   config: ShadingConfig | None = None) -> np.ndarray:
    terms = specular_terms(params, normals, wo, lights, config)
    return terms.weight[:, None] * terms.integral


def shade_gaussian_preclamp(params: TransferParams, normals, wo, light_sh: SHCoeffs,
                            lights: PointLightSet, config: ShadingConfig | None = None) -> np.ndarray:
    diffuse = shade_diffuse(params.albedo, params.d_color, params.d_mono, light_sh)
    return diffuse + shade_specular(params, normals, wo, lights, config)


def shade_gaussian(params: TransferParams, normals, wo, light_sh: SHCoeffs,
                   lights: PointLightSet, config: ShadingConfig | None = None) -> np.ndarray:
    """Diffuse plus specular radiance, clamped at zero."""
    return np.maximum(shade_gaussian_preclamp(params, normals, wo, light_sh, lights, config), 0.0)


def view_directions(positions: np.ndarray, eye: np.ndarray) -> np.ndarray:
    """Unit vectors from each Gaussian centre toward the camera."""
    v = np.asarray(eye, dtype=np.float64) - positions
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def shade_for_view(params: TransferParams, positions, normals, eye, lights: PointLightSet,
                   config: ShadingConfig | None = None, light_sh: SHCoeffs | None = None) -> np.ndarray:
    """Pre-clamp colors of all Gaussians seen from ``eye``."""
    config = config or ShadingConfig()
    if light_sh is None:
        light_sh = pointlights_to_sh(lights, max(config.sh_order, params.order))
    wo = view_directions(positions, eye)
    return shade_gaussian_preclamp(params, normals, wo, light_sh, lights, config)
