"""Compartmental model definitions.

A model is: m compartments, an initial population size n, an initial
probability vector, and a time-indexed row-stochastic transition kernel that
may depend on the current population proportions. Three kernels ship built in
(SIR, SEIR, SEIR with a logistic control ramp on the transmission rate);
custom kernels register under a name and are validated on first evaluation.

Compartment and edge indices are 1-based everywhere a user sees them
(configuration, CSV columns, error messages); arrays are 0-based internally.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "PROB_TOL",
    "check_prob_vector",
    "check_row_stochastic",
    "eta_normalize",
    "TransitionKernel",
    "kernel_eval",
    "sir_kernel",
    "seir_kernel",
    "seir_control_kernel",
    "constant_kernel",
    "register_kernel",
    "build_kernel",
    "KERNEL_BUILDERS",
    "CompartmentalSpec",
    "LimitState",
    "limit_recursion",
]

PROB_TOL = 1e-12


def check_prob_vector(x: Sequence[float], tol: float = PROB_TOL) -> np.ndarray:
    """Validate and return x as a probability vector (sums to 1 within tol)."""
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        raise ValueError("probability vector must be one-dimensional")
    if np.any(v < 0) or np.any(v > 1):
        raise ValueError(f"entries outside [0, 1]: {v}")
    if abs(v.sum() - 1.0) > tol:
        raise ValueError(f"entries sum to {v.sum()!r}, not 1")
    return v


def check_row_stochastic(k: np.ndarray, tol: float = PROB_TOL) -> np.ndarray:
    """Validate an m-by-m row-stochastic matrix."""
    k = np.asarray(k, dtype=float)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise ValueError(f"kernel matrix must be square, got shape {k.shape}")
    if np.any(k < 0) or np.any(k > 1):
        raise ValueError("kernel entries outside [0, 1]")
    rowsums = k.sum(axis=1)
    if np.any(np.abs(rowsums - 1.0) > tol):
        raise ValueError(f"kernel rows must sum to 1, got {rowsums}")
    return k


def eta_normalize(x: Sequence[float]) -> np.ndarray:
    """Normalize a non-negative vector to a probability vector.

    Returns the all-zero vector when the input sums to zero; raises on
    negative entries.
    """
    v = np.asarray(x, dtype=float)
    if np.any(v < 0):
        raise ValueError(f"negative entry in {v}")
    s = v.sum()
    if s == 0.0:
        return np.zeros_like(v)
    return v / s


@dataclass(frozen=True)
class TransitionKernel:
    """Named, parameterized transition kernel: (t, eta) -> row-stochastic matrix.

    ``fn(t, eta, params)`` must be pure. ``h`` is the time-step size entering
    the rate exponentials (uniformly, in every entry).
    """

    name: str
    m: int
    params: dict
    h: float
    fn: Callable[[int, np.ndarray, dict, float], np.ndarray] = field(repr=False)

    def __post_init__(self) -> None:
        if self.h <= 0:
            raise ValueError(f"step size h must be positive, got {self.h}")

    def matrix(self, t: int, eta: np.ndarray) -> np.ndarray:
        return self.fn(t, eta, self.params, self.h)


def kernel_eval(kernel: TransitionKernel, t: int, eta: Sequence[float]) -> np.ndarray:
    """Evaluate and validate the kernel at time t and proportions eta."""
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (kernel.m,):
        raise ValueError(f"eta has length {len(eta)}, kernel expects {kernel.m}")
    return check_row_stochastic(kernel.matrix(t, eta))


def kernel_eval_batch(kernel: TransitionKernel, t: int, etas: np.ndarray) -> np.ndarray:
    """Kernel matrices for a batch of proportion vectors, shape (B, m, m).

    Built-in kernels get a vectorized path (they depend on eta through a
    single entry); anything else falls back to a per-row loop.
    """
    etas = np.asarray(etas, dtype=float)
    B, m = etas.shape
    if m != kernel.m:
        raise ValueError(f"etas have width {m}, kernel expects {kernel.m}")
    p, h = kernel.params, kernel.h
    if kernel.name in ("sir", "seir", "seir_control"):
        if kernel.name == "sir":
            beta_t = p["beta"]
            inf_col = 1
        else:
            beta_t = p["beta"] if kernel.name == "seir" else controlled_rate(p, t)
            inf_col = 2
        out = np.zeros((B, m, m))
        a = np.exp(-h * beta_t * etas[:, inf_col])
        out[:, 0, 0] = a
        out[:, 0, 1] = 1.0 - a
        if kernel.name == "sir":
            b = math.exp(-h * p["gamma"])
            out[:, 1, 1] = b
            out[:, 1, 2] = 1.0 - b
            out[:, 2, 2] = 1.0
        else:
            b = math.exp(-h * p["rho"])
            c = math.exp(-h * p["gamma"])
            out[:, 1, 1] = b
            out[:, 1, 2] = 1.0 - b
            out[:, 2, 2] = c
            out[:, 2, 3] = 1.0 - c
            out[:, 3, 3] = 1.0
        return out
    if kernel.name == "constant":
        return np.broadcast_to(p["matrix"], (B, m, m)).copy()
    return np.stack([kernel.matrix(t, etas[b]) for b in range(B)])


def _check_rates(params: dict, names: Sequence[str]) -> None:
    for name in names:
        if params[name] < 0:
            raise ValueError(f"rate parameter {name} must be >= 0, got {params[name]}")


def _sir_matrix(t, eta, params, h):
    a = math.exp(-h * params["beta"] * eta[1])
    b = math.exp(-h * params["gamma"])
    return np.array([[a, 1.0 - a, 0.0], [0.0, b, 1.0 - b], [0.0, 0.0, 1.0]])


def sir_kernel(beta: float, gamma: float, h: float = 1.0) -> TransitionKernel:
    """S -> I -> R; infection pressure proportional to the infected fraction."""
    params = {"beta": beta, "gamma": gamma}
    _check_rates(params, ["beta", "gamma"])
    return TransitionKernel("sir", 3, params, h, _sir_matrix)


def _seir_matrix(t, eta, params, h):
    a = math.exp(-h * params["beta"] * eta[2])
    b = math.exp(-h * params["rho"])
    c = math.exp(-h * params["gamma"])
    return np.array(
        [
            [a, 1.0 - a, 0.0, 0.0],
            [0.0, b, 1.0 - b, 0.0],
            [0.0, 0.0, c, 1.0 - c],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


def seir_kernel(beta: float, rho: float, gamma: float, h: float = 1.0) -> TransitionKernel:
    """S -> E -> I -> R with mean exposure period 1/rho."""
    params = {"beta": beta, "rho": rho, "gamma": gamma}
    _check_rates(params, ["beta", "rho", "gamma"])
    return TransitionKernel("seir", 4, params, h, _seir_matrix)


def controlled_rate(params: dict, t: int) -> float:
    """Transmission rate under the logistic control ramp.

    beta_t = beta * (alpha + (1 - alpha) / (1 + exp(b*(t - t_star - d)))):
    full rate before the intervention bites, decaying to beta*alpha after.
    """
    z = params["b"] * (t - params["t_star"] - params["d"])
    # logistic evaluated stably on both sides
    if z >= 0:
        logistic = math.exp(-z) / (1.0 + math.exp(-z))
    else:
        logistic = 1.0 / (1.0 + math.exp(z))
    return params["beta"] * (params["alpha"] + (1.0 - params["alpha"]) * logistic)


def _seir_control_matrix(t, eta, params, h):
    beta_t = controlled_rate(params, t)
    a = math.exp(-h * beta_t * eta[2])
    b = math.exp(-h * params["rho"])
    c = math.exp(-h * params["gamma"])
    return np.array(
        [
            [a, 1.0 - a, 0.0, 0.0],
            [0.0, b, 1.0 - b, 0.0],
            [0.0, 0.0, c, 1.0 - c],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


def seir_control_kernel(
    beta: float,
    rho: float,
    gamma: float,
    alpha: float,
    b: float,
    d: float,
    t_star: int,
    h: float = 1.0,
) -> TransitionKernel:
    """SEIR with a time-varying transmission rate modelling an intervention.

    ``alpha`` in [0, 1] is the residual transmission fraction once controls
    are fully in place, ``b`` the slope of the decrease, ``d`` the delay after
    ``t_star`` (a non-negative integer time index) before it takes hold.
    """
    params = {
        "beta": beta,
        "rho": rho,
        "gamma": gamma,
        "alpha": alpha,
        "b": b,
        "d": d,
        "t_star": t_star,
    }
    _check_rates(params, ["beta", "rho", "gamma", "b", "d"])
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if t_star < 0 or int(t_star) != t_star:
        raise ValueError(f"t_star must be a non-negative integer, got {t_star}")
    return TransitionKernel("seir_control", 4, params, h, _seir_control_matrix)


def _constant_matrix(t, eta, params, h):
    return params["matrix"]


def constant_kernel(matrix: Sequence[Sequence[float]], h: float = 1.0) -> TransitionKernel:
    """Kernel that ignores t and eta; handy for toy models and tests."""
    k = check_row_stochastic(np.asarray(matrix, dtype=float))
    return TransitionKernel("constant", k.shape[0], {"matrix": k}, h, _constant_matrix)


KERNEL_BUILDERS: dict[str, Callable[..., TransitionKernel]] = {
    "sir": sir_kernel,
    "seir": seir_kernel,
    "seir_control": seir_control_kernel,
}


def register_kernel(name: str, builder: Callable[..., TransitionKernel]) -> None:
    """Register a custom kernel builder under a config-addressable name.

    The builder takes the kernel's parameters as keyword arguments plus an
    ``h`` keyword and returns a TransitionKernel; the matrix it produces is
    validated row-stochastic on every evaluation.
    """
    if name in KERNEL_BUILDERS:
        raise ValueError(f"kernel name already registered: {name}")
    KERNEL_BUILDERS[name] = builder


def build_kernel(name: str, params: dict, h: float = 1.0) -> TransitionKernel:
    """Instantiate a registered kernel from config-style inputs."""
    if name not in KERNEL_BUILDERS:
        raise ValueError(f"unknown kernel {name!r}; known: {sorted(KERNEL_BUILDERS)}")
    kernel = KERNEL_BUILDERS[name](**params, h=h)
    # validate once at a generic interior point
    kernel_eval(kernel, 1, np.full(kernel.m, 1.0 / kernel.m))
    return kernel


@dataclass(frozen=True)
class CompartmentalSpec:
    """Full model definition: population, initial law, kernel, observed edge.

    ``obs_edge`` is the 1-based (from, to) compartment pair whose flow is
    observed through binomial thinning.
    """

    n: int
    pi0: np.ndarray
    kernel: TransitionKernel
    obs_edge: tuple[int, int]

    def __post_init__(self) -> None:
        if self.n <= 0:
            raise ValueError(f"population size must be positive, got {self.n}")
        pi0 = check_prob_vector(self.pi0)
        object.__setattr__(self, "pi0", pi0)
        if len(pi0) != self.kernel.m:
            raise ValueError(
                f"pi0 has length {len(pi0)} but kernel has {self.kernel.m} compartments"
            )
        i, j = self.obs_edge
        if not (1 <= i <= self.m and 1 <= j <= self.m):
            raise ValueError(f"obs_edge {self.obs_edge} outside 1..{self.m}")
        probe = kernel_eval(self.kernel, 1, np.full(self.m, 1.0 / self.m))
        if probe[i - 1, j - 1] == 0.0:
            warnings.warn(
                f"observed edge {self.obs_edge} is structurally zero for "
                f"kernel {self.kernel.name!r}",
                stacklevel=2,
            )

    @property
    def m(self) -> int:
        return self.kernel.m

    @property
    def h(self) -> float:
        return self.kernel.h

    @property
    def edge_idx(self) -> tuple[int, int]:
        """0-based observed edge for array indexing."""
        return (self.obs_edge[0] - 1, self.obs_edge[1] - 1)


@dataclass(frozen=True)
class LimitState:
    """Large-population limit at one step: proportions nu and flow matrix N."""

    nu: np.ndarray
    N: np.ndarray


def limit_recursion(spec: CompartmentalSpec, T: int) -> list[LimitState]:
    """Deterministic limit of proportions and flows for t = 1..T.

    nu_0 = pi0; N_t has row k equal to nu_{t-1}[k] * K_{t, eta(nu_{t-1})}[k];
    nu_t is the column-sum vector of N_t.
    """
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    nu = spec.pi0.copy()
    out: list[LimitState] = []
    for t in range(1, T + 1):
        k = spec.kernel.matrix(t, eta_normalize(nu))
        flows = nu[:, None] * k
        nu = flows.sum(axis=0)
        out.append(LimitState(nu=nu, N=flows))
    return out
