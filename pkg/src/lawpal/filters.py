"""Deterministic approximate filtering and marginal likelihood.

The over-dispersed filter alternates three closed-form moves per step:

1. push the filtered flow intensities through the kernel (a matrix Poisson
   prediction whose row k is the filtered column-sum intensity times the
   kernel row),
2. integrate out the step's latent reporting probability with a Laplace
   approximation — its mode solves a quadratic, its curvature is analytic —
   which also yields the marginal log-likelihood increment,
3. moment-match the filtered flow matrix: only the observed edge moves,
   to y + (1 - q_bar) * predicted.

The equi-dispersed baseline runs the same prediction/update with a fixed
reporting probability and Poisson likelihood increments.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .model import CompartmentalSpec, TransitionKernel, eta_normalize
from .observation import FixedReporting, TruncNormalReporting
from .randkit import TruncNormalParams, trunc_normal_log_normalizer

__all__ = [
    "FilterStep",
    "FilterOutput",
    "predict_step",
    "laplace_qbar",
    "laplace_s2",
    "ll_increment",
    "update_step",
    "run_lawpal",
    "run_pal",
]

logger = logging.getLogger(__name__)

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class FilterStep:
    """Per-step filter state: predicted flow intensities, reporting posterior
    mode/variance, filtered intensities, and the log-likelihood increment."""

    Lambda_pred: np.ndarray
    q_bar: float
    s2: float
    Lambda_filt: np.ndarray
    lambda_filt: np.ndarray
    ll_inc: float


@dataclass(frozen=True)
class FilterOutput:
    steps: list[FilterStep]
    total_ll: float

    @property
    def flagged_steps(self) -> list[int]:
        """1-based steps whose increment hit the -inf sentinel."""
        return [t + 1 for t, s in enumerate(self.steps) if s.ll_inc == -math.inf]

    def q_bars(self) -> np.ndarray:
        return np.array([s.q_bar for s in self.steps])

    def s2s(self) -> np.ndarray:
        return np.array([s.s2 for s in self.steps])

    def lambda_filts(self) -> np.ndarray:
        return np.array([s.lambda_filt for s in self.steps])


def predict_step(
    lambda_prev: np.ndarray, kernel: TransitionKernel, t: int
) -> np.ndarray:
    """Predicted flow-intensity matrix: row k is lambda_prev[k] * kernel row k."""
    lam = np.asarray(lambda_prev, dtype=float)
    if np.any(lam < 0):
        raise ValueError("lambda_prev must be entrywise non-negative")
    k = kernel.matrix(t, eta_normalize(lam))
    return lam[:, None] * k


def laplace_qbar(Lambda_ij: float, y: float, mu_q: float, sigma2_q: float) -> float:
    """Mode of the reporting probability's joint density, clamped to [0, 1].

    The stationarity condition is the quadratic
    q^2 + (Lambda_ij * sigma2_q - mu_q) q - y * sigma2_q = 0, whose unique
    non-negative root is returned. y = 0 collapses it to max(0, mu_q -
    Lambda_ij * sigma2_q); y > Lambda_ij can push the root past 1, where the
    prior support caps it.
    """
    b = Lambda_ij * sigma2_q - mu_q
    root = 0.5 * (-b + math.sqrt(b * b + 4.0 * y * sigma2_q))
    return min(max(root, 0.0), 1.0)


def laplace_s2(q_bar: float, y: float, sigma2_q: float) -> float:
    """Inverse negative curvature of log p(y, q) at the mode.

    s^2 = 1 / (y / q_bar^2 + 1 / sigma2_q); y = 0 with q_bar = 0 follows the
    0/0 = 0 convention. q_bar = 0 with y > 0 cannot arise from laplace_qbar.
    """
    if y == 0:
        data_term = 0.0
    else:
        if q_bar <= 0.0:
            raise ValueError("q_bar = 0 with y > 0 is outside the mode's range")
        data_term = y / (q_bar * q_bar)
    return 1.0 / (data_term + 1.0 / sigma2_q)


def _ll_increment_raw(
    Lambda_ij: float,
    y: float,
    q_bar: float,
    s2: float,
    mu_q: float,
    sigma: float,
    log_z: float,
) -> float:
    mean = q_bar * Lambda_ij
    if y > 0 and mean == 0.0:
        return -math.inf
    data = -mean - math.lgamma(y + 1.0)
    if y > 0:
        data += y * math.log(mean)
    dev = (q_bar - mu_q) / sigma
    log_prior = -0.5 * dev * dev - math.log(sigma) - 0.5 * _LOG_2PI - log_z
    return data + log_prior + 0.5 * math.log(2.0 * math.pi * s2)


def ll_increment(
    Lambda_ij: float,
    y: float,
    q_bar: float,
    s2: float,
    mu_q: float,
    sigma2_q: float,
) -> float:
    """Laplace approximation of the marginal log-likelihood increment.

    log p(y) ~= log Pois(y; q_bar * Lambda_ij) + log prior(q_bar)
    + 0.5 * log(2 pi s^2). Returns -inf when y > 0 but the predicted edge
    intensity vanishes (impossible observation under the approximation).
    """
    sigma = math.sqrt(sigma2_q)
    log_z = trunc_normal_log_normalizer(TruncNormalParams(mu=mu_q, sigma2=sigma2_q))
    return _ll_increment_raw(Lambda_ij, y, q_bar, s2, mu_q, sigma, log_z)


def update_step(
    Lambda_pred: np.ndarray,
    y: float,
    q_bar: float,
    obs_edge: tuple[int, int],
) -> tuple[np.ndarray, np.ndarray]:
    """Moment-matched filtered intensities.

    Only the observed (1-based) edge changes: it becomes
    y + (1 - q_bar) * predicted. Returns (matrix, column sums).
    """
    i, j = obs_edge
    lam_filt = np.array(Lambda_pred, dtype=float)
    lam_filt[i - 1, j - 1] = y + (1.0 - q_bar) * Lambda_pred[i - 1, j - 1]
    return lam_filt, lam_filt.sum(axis=0)


def _validate_series(y_series) -> np.ndarray:
    y = np.asarray(y_series)
    if y.ndim != 1 or len(y) < 1:
        raise ValueError("y_series must be a non-empty 1-d sequence")
    if np.any(y < 0):
        raise ValueError("observations must be non-negative counts")
    return y


def run_lawpal(
    spec: CompartmentalSpec,
    obs: TruncNormalReporting,
    y_series,
) -> FilterOutput:
    """Run the over-dispersed filter over a series, step by step.

    A -inf increment (positive count on a vanished edge intensity) does not
    abort the run; it propagates to total_ll and the step is flagged.
    """
    if not isinstance(obs, TruncNormalReporting):
        raise TypeError("run_lawpal needs the over-dispersed observation model")
    y = _validate_series(y_series)
    mu_q, sigma2_q = obs.mu_q, obs.sigma2_q
    sigma = math.sqrt(sigma2_q)
    log_z = trunc_normal_log_normalizer(obs.params)
    ei, ej = spec.edge_idx
    kernel = spec.kernel

    lam = spec.n * spec.pi0
    steps: list[FilterStep] = []
    total = 0.0
    for t in range(1, len(y) + 1):
        lam_sum = lam.sum()
        eta = lam / lam_sum if lam_sum > 0.0 else np.zeros_like(lam)
        k = kernel.matrix(t, eta)
        lam_pred = lam[:, None] * k
        lam_ij = lam_pred[ei, ej]
        y_t = float(y[t - 1])

        b = lam_ij * sigma2_q - mu_q
        root = 0.5 * (-b + math.sqrt(b * b + 4.0 * y_t * sigma2_q))
        if root > 1.0:
            logger.debug("step %d: reporting mode clamped at 1 (root=%.6g)", t, root)
        q_bar = min(max(root, 0.0), 1.0)

        data_term = 0.0 if y_t == 0 else y_t / (q_bar * q_bar)
        s2 = 1.0 / (data_term + 1.0 / sigma2_q)

        ll = _ll_increment_raw(lam_ij, y_t, q_bar, s2, mu_q, sigma, log_z)
        if ll == -math.inf:
            logger.debug("step %d: impossible observation (y=%g, edge intensity 0)", t, y_t)

        lam_filt = lam_pred.copy()
        lam_filt[ei, ej] = y_t + (1.0 - q_bar) * lam_ij
        lam = lam_filt.sum(axis=0)

        total += ll
        steps.append(
            FilterStep(
                Lambda_pred=lam_pred,
                q_bar=q_bar,
                s2=s2,
                Lambda_filt=lam_filt,
                lambda_filt=lam,
                ll_inc=ll,
            )
        )
    return FilterOutput(steps=steps, total_ll=total)


def run_pal(
    spec: CompartmentalSpec,
    obs: FixedReporting,
    y_series,
) -> FilterOutput:
    """Equi-dispersed baseline: fixed reporting probability, Poisson increments."""
    if not isinstance(obs, FixedReporting):
        raise TypeError("run_pal needs the fixed-q observation model")
    y = _validate_series(y_series)
    q = obs.q
    ei, ej = spec.edge_idx
    kernel = spec.kernel

    lam = spec.n * spec.pi0
    steps: list[FilterStep] = []
    total = 0.0
    for t in range(1, len(y) + 1):
        lam_sum = lam.sum()
        eta = lam / lam_sum if lam_sum > 0.0 else np.zeros_like(lam)
        k = kernel.matrix(t, eta)
        lam_pred = lam[:, None] * k
        lam_ij = lam_pred[ei, ej]
        y_t = float(y[t - 1])

        mean = q * lam_ij
        if y_t > 0 and mean == 0.0:
            ll = -math.inf
        else:
            ll = -mean - math.lgamma(y_t + 1.0)
            if y_t > 0:
                ll += y_t * math.log(mean)

        lam_filt = lam_pred.copy()
        lam_filt[ei, ej] = y_t + (1.0 - q) * lam_ij
        lam = lam_filt.sum(axis=0)

        total += ll
        steps.append(
            FilterStep(
                Lambda_pred=lam_pred,
                q_bar=q,
                s2=0.0,
                Lambda_filt=lam_filt,
                lambda_filt=lam,
                ll_inc=ll,
            )
        )
    return FilterOutput(steps=steps, total_ll=total)
