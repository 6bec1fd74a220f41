"""Seeded random primitives and the special functions shared by all modules.

Everything random in this package flows through a numpy ``Generator`` seeded
via ``SeedSequence``, so a 64-bit seed pins the whole experiment. Replicates
get independent child streams keyed by (seed, replicate index).

All pmf/pdf evaluations are done in log space: flow intensities reach ~1e7 in
the large-population regimes this package targets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, log_ndtr, ndtr, ndtri, xlogy

__all__ = [
    "rng_from_seed",
    "child_rng",
    "TruncNormalParams",
    "sample_multinomial",
    "sample_binomial",
    "sample_trunc_normal",
    "trunc_normal_logpdf",
    "trunc_normal_log_normalizer",
    "norm_cdf",
    "norm_quantile",
    "log_gamma",
    "log_binom_pmf",
    "log_poisson_pmf",
]


def rng_from_seed(seed: int) -> np.random.Generator:
    """Fresh PCG64 generator for a 64-bit seed. Same seed, same stream."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def child_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for replicate ``index`` of a run seeded by ``seed``.

    Children are derived through ``SeedSequence((seed, index))`` so they are
    reproducible without coordination and independent across indices.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, index))))


@dataclass(frozen=True)
class TruncNormalParams:
    """Normal(mu, sigma2) restricted to [lo, hi] (reporting model uses [0, 1]).

    ``hi`` may be ``inf`` for half-line supports used by priors.
    """

    mu: float
    sigma2: float
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self) -> None:
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if not self.lo < self.hi:
            raise ValueError(f"empty support [{self.lo}, {self.hi}]")

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)


def trunc_normal_log_normalizer(params: TruncNormalParams) -> float:
    """log of Z = Phi((hi-mu)/sigma) - Phi((lo-mu)/sigma).

    Evaluated in the tail-stable orientation; -inf when Z underflows
    (mean many sigmas outside the support).
    """
    s = params.sigma
    a = (params.lo - params.mu) / s
    b = (params.hi - params.mu) / s if math.isfinite(params.hi) else math.inf
    if not math.isfinite(b):
        return float(log_ndtr(-a))
    # Reflect so the difference is between two upper-tail values.
    if a > 0:
        z = ndtr(-a) - ndtr(-b)
    else:
        z = ndtr(b) - ndtr(a)
    if z <= 0.0:
        return -math.inf
    return math.log(z)


def sample_trunc_normal(
    rng: np.random.Generator,
    params: TruncNormalParams,
    size: int | None = None,
) -> float | np.ndarray:
    """Inverse-CDF truncated-normal draw(s); one uniform consumed per sample.

    Raises ValueError when the truncation normalizer underflows.
    """
    s = params.sigma
    a = (params.lo - params.mu) / s
    b = (params.hi - params.mu) / s if math.isfinite(params.hi) else math.inf
    ca = ndtr(a)
    cb = ndtr(b) if math.isfinite(b) else 1.0
    if not cb - ca > 0.0:
        raise ValueError(
            f"truncated-normal normalizer underflow: mu={params.mu}, "
            f"sigma2={params.sigma2}, support=[{params.lo}, {params.hi}]"
        )
    u = rng.uniform(size=size)
    x = ndtri(ca + u * (cb - ca)) * s + params.mu
    return np.clip(x, params.lo, params.hi)


def trunc_normal_logpdf(q, params: TruncNormalParams):
    """Log density of the truncated normal; -inf outside the support.

    Accepts scalars or arrays.
    """
    log_z = trunc_normal_log_normalizer(params)
    if log_z == -math.inf:
        raise ValueError("truncated-normal normalizer underflow")
    s = params.sigma
    q = np.asarray(q, dtype=float)
    z = (q - params.mu) / s
    out = -0.5 * z * z - math.log(s) - 0.5 * math.log(2.0 * math.pi) - log_z
    out = np.where((q < params.lo) | (q > params.hi), -np.inf, out)
    if out.ndim == 0:
        return float(out)
    return out


def sample_multinomial(rng: np.random.Generator, n: int, p: np.ndarray) -> np.ndarray:
    """Multinomial counts summing exactly to n.

    Delegates to the generator's conditional-binomial sampler; p must be a
    probability vector.
    """
    p = np.asarray(p, dtype=float)
    if n < 0:
        raise ValueError(f"count must be non-negative, got {n}")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("p is not a probability vector")
    if n == 0:
        return np.zeros(len(p), dtype=np.int64)
    return rng.multinomial(n, p / p.sum()).astype(np.int64)


def sample_binomial(rng: np.random.Generator, n, p):
    """Binomial draw(s); exact inversion/BTPE under the hood, seed-stable.

    ``n`` and ``p`` broadcast as arrays for vectorized use.
    """
    p_arr = np.asarray(p, dtype=float)
    if np.any(p_arr < 0) or np.any(p_arr > 1):
        raise ValueError("p outside [0, 1]")
    out = rng.binomial(n, p_arr)
    if np.ndim(n) == 0 and p_arr.ndim == 0:
        return int(out)
    return out.astype(np.int64)


def norm_cdf(x):
    """Standard normal CDF (rational-approximation accuracy ~1e-15)."""
    return ndtr(x)


def norm_quantile(p):
    """Standard normal quantile; p must lie in (0, 1)."""
    p_arr = np.asarray(p, dtype=float)
    if np.any(p_arr <= 0) or np.any(p_arr >= 1):
        raise ValueError("quantile argument must lie in (0, 1)")
    out = ndtri(p_arr)
    if p_arr.ndim == 0:
        return float(out)
    return out


def log_gamma(x):
    """log Gamma(x) for x > 0."""
    return gammaln(x)


def log_binom_pmf(y, n, p):
    """log P(Y = y) for Y ~ Binomial(n, p); -inf outside the support.

    Vectorized; uses xlogy so p in {0, 1} follows the 0*log(0) = 0 convention.
    """
    y = np.asarray(y)
    n = np.asarray(n)
    p_arr = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (
            gammaln(n + 1)
            - gammaln(y + 1)
            - gammaln(n - y + 1)
            + xlogy(y, p_arr)
            + xlogy(n - y, 1.0 - p_arr)
        )
    out = np.where((y < 0) | (y > n), -np.inf, out)
    out = np.where(np.isnan(out), -np.inf, out)
    if out.ndim == 0:
        return float(out)
    return out


def log_poisson_pmf(y, lam):
    """log P(Y = y) for Y ~ Poisson(lam); log_poisson_pmf(0, 0) = 0."""
    y = np.asarray(y)
    lam = np.asarray(lam, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = xlogy(y, lam) - lam - gammaln(y + 1)
    out = np.where((y < 0), -np.inf, out)
    # y > 0 with lam == 0 is impossible: xlogy returns 0 there, fix to -inf
    out = np.where((lam == 0) & (y > 0), -np.inf, out)
    out = np.where(np.isnan(out), -np.inf, out)
    if out.ndim == 0:
        return float(out)
    return out
