"""Reporting models for the observed edge flow.

Two variants: a fixed reporting probability (equi-dispersed binomial
thinning) and a per-step latent probability drawn from a truncated normal on
[0, 1] (over-dispersed once marginalized).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .randkit import TruncNormalParams, sample_trunc_normal

__all__ = ["FixedReporting", "TruncNormalReporting", "ObservationModel", "sample_reporting"]


@dataclass(frozen=True)
class FixedReporting:
    """Every count on the observed edge is reported with probability q."""

    q: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.q <= 1.0:
            raise ValueError(f"q must lie in [0, 1], got {self.q}")


@dataclass(frozen=True)
class TruncNormalReporting:
    """Per-step reporting probability ~ Normal(mu_q, sigma2_q) truncated to [0, 1]."""

    mu_q: float
    sigma2_q: float

    def __post_init__(self) -> None:
        if not self.sigma2_q > 0:
            raise ValueError(f"sigma2_q must be positive, got {self.sigma2_q}")

    @property
    def params(self) -> TruncNormalParams:
        return TruncNormalParams(mu=self.mu_q, sigma2=self.sigma2_q, lo=0.0, hi=1.0)


ObservationModel = Union[FixedReporting, TruncNormalReporting]


def sample_reporting(
    rng: np.random.Generator, obs: ObservationModel, size: int | None = None
):
    """Draw the step's reporting probability (a constant for FixedReporting)."""
    if isinstance(obs, FixedReporting):
        if size is None:
            return obs.q
        return np.full(size, obs.q)
    return sample_trunc_normal(rng, obs.params, size=size)
