"""Inverse rendering with frozen geometry: light intensities and transfer parameters."""

from gprt.fitting.adam import Adam
from gprt.fitting.config import FitConfig, LossWeights, light_fit_defaults, transfer_fit_defaults
from gprt.fitting.lights import FitReport, LightFitResult, LightProblem, fit_lights, flux_within
from gprt.fitting.losses import (loss_alpha, loss_geometry, loss_l1, loss_ssim, psnr, reg_terms,
                                 scale_bounds)
from gprt.fitting.transfer import (NaturalParams, TransferFitResult, TransferProblem, fit_transfer,
                                   least_squares_init, relight_transfer)

__all__ = [
    "Adam", "FitConfig", "LossWeights", "light_fit_defaults", "transfer_fit_defaults",
    "FitReport", "LightFitResult", "LightProblem", "fit_lights", "flux_within",
    "loss_alpha", "loss_geometry", "loss_l1", "loss_ssim", "psnr", "reg_terms", "scale_bounds",
    "NaturalParams", "TransferFitResult", "TransferProblem", "fit_transfer", "least_squares_init",
    "relight_transfer",
]
