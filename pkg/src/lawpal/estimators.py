"""Parameter estimation on top of any likelihood evaluator.

Two engines, both derivative-free so they run unchanged on the deterministic
filter likelihood or a particle-filter estimate:

- coordinate ascent with golden-section line searches (approximate MLE),
- random-walk Metropolis with an adaptive second phase whose joint Gaussian
  proposal uses the classic (2.38^2 / d) scaling of the burn-in covariance.

Plus the small prior library the workflows need (truncated normal, beta,
exponential).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np
from scipy.special import betaln, xlog1py, xlogy

from .randkit import TruncNormalParams, trunc_normal_logpdf

__all__ = [
    "Parameter",
    "ParamSpace",
    "TruncNormalPrior",
    "BetaPrior",
    "ExponentialPrior",
    "Prior",
    "log_prior",
    "coordinate_ascent",
    "Chain",
    "rwm_chain",
]

logger = logging.getLogger(__name__)

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class Parameter:
    """One free parameter: bounds, initial value, and the search scale.

    ``log_scale`` parameters are line-searched in log space (strictly
    positive quantities spanning decades, like a reporting variance).
    """

    name: str
    lo: float
    hi: float
    init: float
    log_scale: bool = False

    def __post_init__(self) -> None:
        if not self.lo < self.hi:
            raise ValueError(f"{self.name}: need lo < hi, got [{self.lo}, {self.hi}]")
        if not self.lo <= self.init <= self.hi:
            raise ValueError(f"{self.name}: init {self.init} outside bounds")
        if self.log_scale and self.lo <= 0:
            raise ValueError(f"{self.name}: log scale needs a positive lower bound")


@dataclass(frozen=True)
class ParamSpace:
    params: tuple[Parameter, ...]

    def __init__(self, params: Sequence[Parameter]):
        object.__setattr__(self, "params", tuple(params))
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate parameter names in {names}")

    def __len__(self) -> int:
        return len(self.params)

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.params]

    def init_vector(self) -> np.ndarray:
        return np.array([p.init for p in self.params])

    def in_bounds(self, theta: np.ndarray) -> bool:
        return all(p.lo <= v <= p.hi for p, v in zip(self.params, theta))

    def to_dict(self, theta: np.ndarray) -> dict[str, float]:
        return {p.name: float(v) for p, v in zip(self.params, theta)}


def _to_search(p: Parameter, v: float) -> float:
    return math.log(v) if p.log_scale else v


def _from_search(p: Parameter, u: float) -> float:
    return math.exp(u) if p.log_scale else u


def _golden_section_max(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    xtol: float,
    max_iter: int = 60,
) -> tuple[float, float]:
    """Golden-section maximization on [lo, hi]; returns best (x, f(x)) seen.

    -inf values are legal and simply lose every comparison.
    """
    a, b = lo, hi
    x1 = b - _INVPHI * (b - a)
    x2 = a + _INVPHI * (b - a)
    f1, f2 = f(x1), f(x2)
    best_x, best_f = (x1, f1) if f1 >= f2 else (x2, f2)
    for _ in range(max_iter):
        if b - a < xtol:
            break
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + _INVPHI * (b - a)
            f2 = f(x2)
            if f2 > best_f:
                best_x, best_f = x2, f2
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - _INVPHI * (b - a)
            f1 = f(x1)
            if f1 > best_f:
                best_x, best_f = x1, f1
    return best_x, best_f


def coordinate_ascent(
    objective: Callable[[np.ndarray], float],
    space: ParamSpace,
    tol: float = 1e-5,
    max_cycles: int = 60,
) -> tuple[np.ndarray, float]:
    """Cyclic coordinate maximization of ``objective`` over the box.

    Each coordinate is maximized by golden-section search between its bounds
    (on the parameter's search scale); a move is only accepted if it improves
    the objective, so cycles never decrease it. Stops when a full cycle gains
    less than ``tol`` or after ``max_cycles``. Returns (argmax, value).
    """
    theta = space.init_vector()
    current = objective(theta)
    if not math.isfinite(current):
        raise ValueError(f"objective not finite at the initial point: {current}")

    for cycle in range(max_cycles):
        cycle_start = current
        for idx, p in enumerate(space.params):

            def line(u: float, _idx=idx, _p=p) -> float:
                trial = theta.copy()
                trial[_idx] = _from_search(_p, u)
                return objective(trial)

            u_best, f_best = _golden_section_max(
                line, _to_search(p, p.lo), _to_search(p, p.hi), xtol=tol
            )
            if f_best > current:
                theta[idx] = _from_search(p, u_best)
                current = f_best
        if current - cycle_start < tol:
            break
    return theta, current


@dataclass(frozen=True)
class TruncNormalPrior:
    mu: float
    sigma2: float
    lo: float = 0.0
    hi: float = math.inf


@dataclass(frozen=True)
class BetaPrior:
    a: float
    b: float

    def __post_init__(self) -> None:
        if self.a <= 0 or self.b <= 0:
            raise ValueError("beta prior needs positive shape parameters")


@dataclass(frozen=True)
class ExponentialPrior:
    rate: float

    def __post_init__(self) -> None:
        if self.rate <= 0:
            raise ValueError("exponential prior needs a positive rate")


Prior = Union[TruncNormalPrior, BetaPrior, ExponentialPrior]


def log_prior(prior: Prior, value: float) -> float:
    """Log prior density; -inf outside the support."""
    if isinstance(prior, TruncNormalPrior):
        return float(
            trunc_normal_logpdf(
                value,
                TruncNormalParams(
                    mu=prior.mu, sigma2=prior.sigma2, lo=prior.lo, hi=prior.hi
                ),
            )
        )
    if isinstance(prior, BetaPrior):
        if not 0.0 <= value <= 1.0:
            return -math.inf
        return float(
            xlogy(prior.a - 1.0, value)
            + xlog1py(prior.b - 1.0, -value)
            - betaln(prior.a, prior.b)
        )
    if isinstance(prior, ExponentialPrior):
        if value < 0:
            return -math.inf
        return math.log(prior.rate) - prior.rate * value
    raise TypeError(f"unknown prior type {type(prior)!r}")


@dataclass(frozen=True)
class Chain:
    """Kept samples plus run diagnostics from the adaptive random-walk run."""

    samples: np.ndarray
    log_post: np.ndarray
    acceptance_rate: float
    proposal_cov: np.ndarray
    names: list[str] = field(default_factory=list)

    def mean(self) -> np.ndarray:
        return self.samples.mean(axis=0)

    def sd(self) -> np.ndarray:
        return self.samples.std(axis=0, ddof=1)


def _safe_cholesky(cov: np.ndarray) -> np.ndarray:
    """Cholesky with the documented regularization for singular covariances."""
    d = cov.shape[0]
    scale = 1.0
    mat = cov
    for _ in range(40):
        try:
            return np.linalg.cholesky(mat)
        except np.linalg.LinAlgError:
            bump = scale * (1e-8 * np.diag(np.diag(cov)) + 1e-12 * np.eye(d))
            logger.info("proposal covariance singular; regularizing (scale %.1e)", scale)
            mat = cov + bump
            scale *= 10.0
    raise np.linalg.LinAlgError("could not regularize proposal covariance")


def rwm_chain(
    log_post: Callable[[np.ndarray], float],
    space: ParamSpace,
    burn_iters: int,
    burn_step_var: float,
    main_iters: int,
    rng: np.random.Generator,
    thin: int = 1,
) -> Chain:
    """Two-phase random-walk Metropolis.

    Phase 1 uses independent Gaussian steps of variance ``burn_step_var`` on
    every coordinate. Phase 2 draws joint Gaussian steps with covariance
    (2.38^2 / d) times the burn-in sample covariance. Proposals leaving the
    box are rejected outright. Only phase-2 samples are kept (every
    ``thin``-th); the acceptance rate refers to phase 2.
    """
    if thin < 1:
        raise ValueError(f"thin must be >= 1, got {thin}")
    d = len(space)
    lo = np.array([p.lo for p in space.params])
    hi = np.array([p.hi for p in space.params])

    x = space.init_vector()
    lp = log_post(x)
    if not math.isfinite(lp):
        raise ValueError(f"log posterior not finite at the initial point: {lp}")

    burn = np.zeros((burn_iters, d))
    step_sd = math.sqrt(burn_step_var)
    for it in range(burn_iters):
        prop = x + rng.normal(0.0, step_sd, size=d)
        if np.all(prop >= lo) and np.all(prop <= hi):
            lp_prop = log_post(prop)
            if math.log(rng.uniform()) < lp_prop - lp:
                x, lp = prop, lp_prop
        burn[it] = x

    if burn_iters >= 2:
        sigma_hat = np.cov(burn.T).reshape(d, d)
    else:
        sigma_hat = burn_step_var * np.eye(d)
    proposal_cov = (2.38**2 / d) * sigma_hat
    chol = _safe_cholesky(proposal_cov)

    n_kept = main_iters // thin
    samples = np.zeros((n_kept, d))
    lp_trace = np.zeros(n_kept)
    accepted = 0
    kept = 0
    for it in range(main_iters):
        prop = x + chol @ rng.normal(size=d)
        if np.all(prop >= lo) and np.all(prop <= hi):
            lp_prop = log_post(prop)
            if math.log(rng.uniform()) < lp_prop - lp:
                x, lp = prop, lp_prop
                accepted += 1
        if (it + 1) % thin == 0 and kept < n_kept:
            samples[kept] = x
            lp_trace[kept] = lp
            kept += 1

    return Chain(
        samples=samples,
        log_post=lp_trace,
        acceptance_rate=accepted / max(main_iters, 1),
        proposal_cov=proposal_cov,
        names=space.names,
    )
