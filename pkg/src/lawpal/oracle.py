"""Brute-force verifiers: quadrature, grid search, exhaustive enumeration.

These deliberately share no arithmetic with the filter they check. They are
test- and benchmark-facing only; nothing here is tuned for speed beyond
making the test suite tolerable.
"""

from __future__ import annotations

import math
from functools import lru_cache
from itertools import product

import numpy as np
from scipy.special import logsumexp

from .model import CompartmentalSpec, eta_normalize
from .observation import FixedReporting, ObservationModel, TruncNormalReporting
from .randkit import (
    TruncNormalParams,
    log_binom_pmf,
    log_poisson_pmf,
    trunc_normal_logpdf,
)

__all__ = [
    "quad_marginal",
    "quad_posterior_mean_q",
    "grid_argmax",
    "curvature_fd",
    "enumerate_loglik",
    "EnumerationBudgetError",
]


_NODES_PER_PANEL = 50


@lru_cache(maxsize=4)
def _gl_base(n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    return 0.5 * (x + 1.0), 0.5 * w


def _log_integral(log_f, n_panels: int) -> float:
    """log of integral over [0,1] by composite Gauss-Legendre, log-sum-exp."""
    x0, w0 = _gl_base(_NODES_PER_PANEL)
    width = 1.0 / n_panels
    starts = np.arange(n_panels) * width
    q = (starts[:, None] + x0[None, :] * width).ravel()
    logw = math.log(width) + np.log(np.tile(w0, n_panels))
    vals = log_f(q) + logw
    if np.all(np.isneginf(vals)):
        return -math.inf
    return float(logsumexp(vals))


def _adaptive_log_integral(
    log_f, n_panels: int = 4, tol: float = 1e-10, max_panels: int = 4096
) -> float:
    prev = _log_integral(log_f, n_panels)
    n = n_panels
    while n * 2 <= max_panels:
        n *= 2
        cur = _log_integral(log_f, n)
        if prev == -math.inf and cur == -math.inf:
            return -math.inf
        if abs(cur - prev) < tol:
            return cur
        prev = cur
    return prev


def quad_marginal(
    Lambda_ij: float,
    y: int,
    mu_q: float,
    sigma2_q: float,
    n_panels: int = 4,
    tol: float = 1e-10,
    max_panels: int = 4096,
) -> float:
    """log of integral over [0,1] of Pois(y; q*Lambda_ij) * truncnorm(q) dq.

    Composite Gauss-Legendre (50 nodes per panel, so >= 200 nodes at the
    starting resolution); panel count doubles until successive values agree
    within tol, with log-sum-exp accumulation throughout. -inf when every
    integrand value underflows.
    """
    params = TruncNormalParams(mu=mu_q, sigma2=sigma2_q)

    def log_f(q):
        return log_poisson_pmf(y, q * Lambda_ij) + trunc_normal_logpdf(q, params)

    return _adaptive_log_integral(log_f, n_panels, tol, max_panels)


def quad_posterior_mean_q(
    Lambda_ij: float,
    y: int,
    mu_q: float,
    sigma2_q: float,
    tol: float = 1e-12,
) -> float:
    """E[q | y] under the exact single-step model, by ratio of quadratures."""
    params = TruncNormalParams(mu=mu_q, sigma2=sigma2_q)

    def log_f(q):
        return log_poisson_pmf(y, q * Lambda_ij) + trunc_normal_logpdf(q, params)

    def log_qf(q):
        with np.errstate(divide="ignore"):
            return np.log(q) + log_f(q)

    log_den = _adaptive_log_integral(log_f, tol=tol)
    log_num = _adaptive_log_integral(log_qf, tol=tol)
    if log_den == -math.inf:
        raise ValueError("posterior normalizer underflow")
    return math.exp(log_num - log_den)


def _joint_objective(q, Lambda_ij: float, y: int, mu_q: float, sigma2_q: float):
    """y log q - Lambda q - (q - mu)^2 / (2 sigma^2), the mode's objective."""
    q = np.asarray(q, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        data = np.where(y > 0, y * np.log(q), 0.0)
    dev = q - mu_q
    out = data - Lambda_ij * q - dev * dev / (2.0 * sigma2_q)
    if out.ndim == 0:
        return float(out)
    return out


def grid_argmax(
    Lambda_ij: float,
    y: int,
    mu_q: float,
    sigma2_q: float,
    grid_step: float = 1e-3,
) -> float:
    """Arg-max of the joint log density over (0, 1] by grid plus ternary refine."""
    grid = np.arange(grid_step, 1.0 + 0.5 * grid_step, grid_step)
    vals = _joint_objective(grid, Lambda_ij, y, mu_q, sigma2_q)
    best = grid[int(np.argmax(vals))]
    lo = max(0.0, best - grid_step)
    hi = min(1.0, best + grid_step)
    # ternary search; the objective is strictly concave in q on (0, 1]
    for _ in range(200):
        if hi - lo < 1e-14:
            break
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        if _joint_objective(m1, Lambda_ij, y, mu_q, sigma2_q) < _joint_objective(
            m2, Lambda_ij, y, mu_q, sigma2_q
        ):
            lo = m1
        else:
            hi = m2
    return 0.5 * (lo + hi)


def curvature_fd(
    Lambda_ij: float,
    y: int,
    mu_q: float,
    sigma2_q: float,
    q_point: float,
    h: float | None = None,
) -> float:
    """Negative inverse second derivative of the joint objective at q_point.

    Central differences on the exactly-centred increment
    g(q+d) - g(q) = y log1p(d/q) - Lambda d - (d^2 + 2 d (q - mu)) / (2 s^2),
    which avoids the catastrophic cancellation of differencing two large
    objective values.
    """
    if h is None:
        # step must stay well inside the log's domain scale at small modes
        h = max(1e-9, 1e-4 * q_point) if y > 0 else 1e-4 * max(q_point, 0.05)

    def centred(d: float) -> float:
        data = y * math.log1p(d / q_point) if y > 0 else 0.0
        prior = (d * d + 2.0 * d * (q_point - mu_q)) / (2.0 * sigma2_q)
        return data - Lambda_ij * d - prior

    second = (centred(h) + centred(-h)) / (h * h)
    if second >= 0:
        raise ValueError("objective not concave at q_point")
    return -1.0 / second


class EnumerationBudgetError(ValueError):
    """Raised when exhaustive enumeration would exceed the configured budget."""

    def __init__(self, estimated: int, budget: int):
        super().__init__(
            f"exhaustive enumeration needs ~{estimated} configurations, "
            f"budget is {budget}"
        )
        self.estimated = estimated
        self.budget = budget


def _compositions(total: int, parts: int) -> list[tuple[int, ...]]:
    """All length-`parts` tuples of non-negative ints summing to total."""
    if parts == 1:
        return [(total,)]
    out = []
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            out.append((first,) + rest)
    return out


def _log_multinomial(counts: tuple[int, ...], p: np.ndarray) -> float:
    n = sum(counts)
    out = math.lgamma(n + 1)
    for c, pk in zip(counts, p):
        out -= math.lgamma(c + 1)
        if c > 0:
            if pk == 0.0:
                return -math.inf
            out += c * math.log(pk)
    return out


def _step_work_bound(n: int, m: int) -> int:
    """Upper bound on per-step transition configurations over all states."""
    total = 0
    for state in _compositions(n, m):
        w = 1
        for c in state:
            w *= math.comb(c + m - 1, m - 1)
        total += w
    return total


def enumerate_loglik(
    spec: CompartmentalSpec,
    obs: ObservationModel,
    y_series,
    budget: int = 5_000_000,
    n_panels: int = 16,
) -> float:
    """Exact log p(y_{1:T}) by summing over every transition configuration.

    Forward pass over the state-count vector; each step sums over all
    per-row multinomial outcomes, with the reporting probability integrated
    out by quadrature (cached per (flow, y) pair). Only feasible at toy
    scale; raises EnumerationBudgetError with a size estimate otherwise.
    """
    y = np.asarray(y_series)
    m, n = spec.m, spec.n
    ei, ej = spec.edge_idx
    T = len(y)

    estimated = _step_work_bound(n, m) * T
    if estimated > budget:
        raise EnumerationBudgetError(estimated, budget)

    if isinstance(obs, TruncNormalReporting):
        params = obs.params

        @lru_cache(maxsize=None)
        def log_obs(flow: int, y_t: int) -> float:
            def log_f(q):
                return log_binom_pmf(y_t, flow, q) + trunc_normal_logpdf(q, params)

            return _log_integral(log_f, n_panels)

    else:

        @lru_cache(maxsize=None)
        def log_obs(flow: int, y_t: int) -> float:
            return log_binom_pmf(y_t, flow, obs.q)

    # alpha: state tuple -> log p(x_t = state, y_{1:t})
    alpha: dict[tuple[int, ...], float] = {}
    for state in _compositions(n, m):
        lp = _log_multinomial(state, spec.pi0)
        if lp > -math.inf:
            alpha[state] = lp

    row_comps_cache: dict[int, list[tuple[int, ...]]] = {}

    for t in range(1, T + 1):
        y_t = int(y[t - 1])
        new_alpha: dict[tuple[int, ...], list[float]] = {}
        for state, lp_state in alpha.items():
            k = spec.kernel.matrix(t, eta_normalize(np.array(state, dtype=float)))
            row_options: list[list[tuple[tuple[int, ...], float]]] = []
            for i in range(m):
                if state[i] == 0:
                    row_options.append([(tuple([0] * m), 0.0)])
                    continue
                comps = row_comps_cache.setdefault(state[i], _compositions(state[i], m))
                opts = []
                for counts in comps:
                    lp = _log_multinomial(counts, k[i])
                    if lp > -math.inf:
                        opts.append((counts, lp))
                row_options.append(opts)
            for combo in product(*row_options):
                lp = lp_state
                flow_edge = 0
                col = [0] * m
                for i, (counts, lp_row) in enumerate(combo):
                    lp += lp_row
                    flow_edge += counts[ej] if i == ei else 0
                    for jj in range(m):
                        col[jj] += counts[jj]
                lp += log_obs(flow_edge, y_t)
                if lp == -math.inf:
                    continue
                new_alpha.setdefault(tuple(col), []).append(lp)
        alpha = {s: float(logsumexp(v)) for s, v in new_alpha.items()}
        if not alpha:
            return -math.inf

    return float(logsumexp(list(alpha.values())))
