"""Loss weights and optimizer settings for the two fitting problems."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

from gprt.errors import InvalidInputError


@dataclass
class LossWeights:
    w_l1: float = 0.8
    w_ssim: float = 0.2
    w_geom: float = 0.1
    w_scale_reg: float = 0.01
    w_negcolor: float = 0.01
    w_alpha: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) >= 0:
                raise InvalidInputError(f"{f.name} must be >= 0")


@dataclass
class FitConfig:
    """Projected Adam settings.

    ``lr`` is a step size relative to the parameter scale: for light fitting the
    mean initial intensity, for transfer fitting the unconstrained parameters.
    It decays exponentially to ``lr * lr_final_ratio`` at the last iteration.
    """

    lr: float = 0.02
    iterations: int = 3000
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-12
    project_nonneg: bool = True
    lr_final_ratio: float = 0.05
    # pin BLAS to one thread so every reduction runs in a fixed order
    deterministic: bool = True
    weights: LossWeights = field(default_factory=LossWeights)

    def __post_init__(self):
        if isinstance(self.weights, dict):
            self.weights = LossWeights(**self.weights)
        if not self.lr > 0:
            raise InvalidInputError("lr must be > 0")
        if self.iterations < 0:
            raise InvalidInputError("iterations must be >= 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise InvalidInputError("Adam moments must lie in [0, 1)")
        if not (0 < self.lr_final_ratio <= 1):
            raise InvalidInputError("lr_final_ratio must lie in (0, 1]")

    def lr_at(self, it: int) -> float:
        if self.iterations <= 1:
            return self.lr
        return self.lr * self.lr_final_ratio ** (it / (self.iterations - 1))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict, **defaults) -> "FitConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidInputError(f"unknown fit config keys: {sorted(unknown)}")
        merged = {**defaults, **data}
        try:
            return cls(**merged)
        except TypeError as exc:
            raise InvalidInputError(str(exc)) from exc


def light_fit_defaults() -> FitConfig:
    return FitConfig(lr=0.02, iterations=3000)


def transfer_fit_defaults() -> FitConfig:
    """Settings for transfer fitting.

    Single-light frames only observe the clamped response, so the response to
    lights behind a Gaussian is pinned down mainly by the negative-color
    penalty; it needs a much larger weight than the generic default.
    """
    return FitConfig(lr=0.02, iterations=500, weights=LossWeights(w_negcolor=1.0))
