"""Bootstrap particle filter over the latent chain (states, edge flow, q).

The proposal is the model dynamics, the weight is the binomial observation
density, resampling is systematic at every step (an ESS-threshold trigger
exists behind a flag, default off). The resulting log-likelihood estimator
is the gold-standard comparator for the deterministic filters.

Particles carry only the state vector and the observed-edge flow: the weight
never reads any other entry of the transition-count matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .model import CompartmentalSpec, eta_normalize, kernel_eval_batch
from .observation import FixedReporting, ObservationModel, sample_reporting
from .randkit import log_binom_pmf, sample_multinomial

__all__ = [
    "Particle",
    "PfOutput",
    "ParticleDegeneracyError",
    "propagate",
    "weight",
    "systematic_resample",
    "run_bpf",
]


class ParticleDegeneracyError(RuntimeError):
    """All particle weights vanished; carries the failing step when known."""

    def __init__(self, step: int | None = None):
        self.step = step
        where = f" at step {step}" if step is not None else ""
        super().__init__(f"all particle weights are -inf{where}")


@dataclass(frozen=True)
class Particle:
    """One particle: state counts, current observed-edge flow, reporting
    probability, and (once weighted) a log weight."""

    x: np.ndarray
    z_edge: int
    q: float
    log_w: float = math.nan


@dataclass(frozen=True)
class PfOutput:
    log_likelihood: float
    ess_trace: np.ndarray
    step_log_normalizers: np.ndarray


def propagate(
    rng: np.random.Generator,
    particle: Particle,
    spec: CompartmentalSpec,
    obs: ObservationModel,
    t: int,
) -> Particle:
    """Advance one particle through the model dynamics; weight left unset."""
    ei, ej = spec.edge_idx
    k = spec.kernel.matrix(t, eta_normalize(particle.x))
    new_x = np.zeros(spec.m, dtype=np.int64)
    z_edge = 0
    for i in range(spec.m):
        if particle.x[i] > 0:
            row = sample_multinomial(rng, int(particle.x[i]), k[i])
            new_x += row
            if i == ei:
                z_edge = int(row[ej])
    q = float(sample_reporting(rng, obs))
    return Particle(x=new_x, z_edge=z_edge, q=q)


def weight(particle: Particle, y_t: int) -> float:
    """Log observation density of y_t given the particle's flow and q."""
    if y_t < 0:
        raise ValueError("observation must be a non-negative count")
    return float(log_binom_pmf(y_t, particle.z_edge, particle.q))


def systematic_resample(
    rng: np.random.Generator, log_weights: np.ndarray, n_out: int | None = None
) -> np.ndarray:
    """Systematic resampling: one uniform, stratified inverse-CDF lookups."""
    lw = np.asarray(log_weights, dtype=float)
    if np.all(np.isneginf(lw)):
        raise ParticleDegeneracyError()
    n_out = len(lw) if n_out is None else n_out
    w = np.exp(lw - logsumexp(lw))
    positions = (rng.uniform() + np.arange(n_out)) / n_out
    cdf = np.cumsum(w)
    cdf[-1] = 1.0  # guard against roundoff at the top
    return np.searchsorted(cdf, positions).astype(np.int64)


def _propagate_all(
    rng: np.random.Generator,
    xs: np.ndarray,
    spec: CompartmentalSpec,
    t: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized transition step for all particles.

    Row-wise multinomials are drawn as conditional binomials in compartment
    order; the last positive-probability cell absorbs the exact remainder so
    every particle keeps its population. Returns (new states, edge flows).
    """
    N, m = xs.shape
    ei, ej = spec.edge_idx
    etas = xs / xs.sum(axis=1, keepdims=True)
    ks = kernel_eval_batch(spec.kernel, t, etas)
    new_xs = np.zeros_like(xs)
    z_edge = np.zeros(N, dtype=np.int64)
    for i in range(m):
        remaining = xs[:, i].copy()
        denom = np.ones(N)
        for j in range(m):
            p = ks[:, i, j]
            with np.errstate(divide="ignore", invalid="ignore"):
                pc = np.where(p >= denom, 1.0, p / np.maximum(denom, 1e-300))
            pc = np.clip(pc, 0.0, 1.0)
            draws = rng.binomial(remaining, pc)
            new_xs[:, j] += draws
            if i == ei and j == ej:
                z_edge = draws.astype(np.int64)
            remaining -= draws
            denom = denom - p
    return new_xs, z_edge


def run_bpf(
    spec: CompartmentalSpec,
    obs: ObservationModel,
    y_series,
    N: int,
    rng: np.random.Generator,
    ess_threshold: float | None = None,
) -> PfOutput:
    """Particle-filter estimate of the marginal log-likelihood.

    ``ess_threshold`` (a fraction of N) switches on adaptive resampling;
    by default every step resamples. ESS is recorded before resampling.
    Raises ParticleDegeneracyError with the failing step when all weights
    vanish.
    """
    if N < 2:
        raise ValueError(f"need at least 2 particles, got {N}")
    y = np.asarray(y_series)
    if np.any(y < 0):
        raise ValueError("observations must be non-negative counts")
    T = len(y)
    ei, ej = spec.edge_idx

    xs = rng.multinomial(spec.n, spec.pi0, size=N).astype(np.int64)
    lw_norm = np.full(N, -math.log(N))
    total_ll = 0.0
    ess_trace = np.zeros(T)
    log_normalizers = np.zeros(T)

    for t in range(1, T + 1):
        xs, z_edge = _propagate_all(rng, xs, spec, t)
        qs = np.asarray(sample_reporting(rng, obs, size=N), dtype=float)
        logw = log_binom_pmf(int(y[t - 1]), z_edge, qs)

        combined = lw_norm + logw
        step_norm = logsumexp(combined)
        if step_norm == -math.inf:
            raise ParticleDegeneracyError(step=t)
        total_ll += step_norm
        log_normalizers[t - 1] = step_norm
        lw_norm = combined - step_norm
        ess = 1.0 / np.sum(np.exp(2.0 * lw_norm))
        ess_trace[t - 1] = ess

        if ess_threshold is None or ess < ess_threshold * N:
            try:
                idx = systematic_resample(rng, lw_norm)
            except ParticleDegeneracyError:
                raise ParticleDegeneracyError(step=t) from None
            xs = xs[idx]
            lw_norm = np.full(N, -math.log(N))

    return PfOutput(
        log_likelihood=float(total_ll),
        ess_trace=ess_trace,
        step_log_normalizers=log_normalizers,
    )
