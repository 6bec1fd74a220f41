"""Exact forward simulation of the latent process and its noisy observations.

Per step: every compartment row of the transition-count matrix is a
multinomial draw over the kernel row, the new state is the column sums, a
reporting probability is drawn (or fixed), and the observation thins the
observed-edge flow binomially. Draw order is fixed (rows in compartment
order, then q, then y) so a seed pins the trajectory bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import CompartmentalSpec, eta_normalize
from .observation import ObservationModel, sample_reporting
from .randkit import sample_binomial, sample_multinomial

__all__ = ["Trajectory", "simulate", "simulate_with_fixed_q_path"]


@dataclass(frozen=True)
class Trajectory:
    """One simulated path: states x (T+1 by m), flows Z (T by m by m),
    reporting probabilities q and observations y (length T)."""

    x: np.ndarray
    Z: np.ndarray
    q: np.ndarray
    y: np.ndarray

    @property
    def T(self) -> int:
        return len(self.y)

    def edge_flows(self, obs_edge: tuple[int, int]) -> np.ndarray:
        i, j = obs_edge
        return self.Z[:, i - 1, j - 1]


def _step_transitions(
    rng: np.random.Generator, spec: CompartmentalSpec, x_prev: np.ndarray, t: int
) -> np.ndarray:
    k = spec.kernel.matrix(t, eta_normalize(x_prev))
    z = np.zeros((spec.m, spec.m), dtype=np.int64)
    for i in range(spec.m):
        if x_prev[i] > 0:
            z[i] = sample_multinomial(rng, int(x_prev[i]), k[i])
    return z


def simulate(
    spec: CompartmentalSpec,
    obs: ObservationModel,
    T: int,
    rng: np.random.Generator,
) -> Trajectory:
    """Simulate x_{0:T}, Z_{1:T}, q_{1:T}, y_{1:T} under the full model."""
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    m = spec.m
    ei, ej = spec.edge_idx
    x = np.zeros((T + 1, m), dtype=np.int64)
    Z = np.zeros((T, m, m), dtype=np.int64)
    q = np.zeros(T)
    y = np.zeros(T, dtype=np.int64)
    x[0] = sample_multinomial(rng, spec.n, spec.pi0)
    for t in range(1, T + 1):
        z = _step_transitions(rng, spec, x[t - 1], t)
        Z[t - 1] = z
        x[t] = z.sum(axis=0)
        q[t - 1] = sample_reporting(rng, obs)
        y[t - 1] = sample_binomial(rng, int(z[ei, ej]), q[t - 1])
    return Trajectory(x=x, Z=Z, q=q, y=y)


def simulate_with_fixed_q_path(
    spec: CompartmentalSpec,
    q_path: np.ndarray,
    T: int,
    rng: np.random.Generator,
) -> Trajectory:
    """Simulate with a pre-drawn reporting-probability path.

    Used for limit studies where one q path is shared across population
    sizes; q_path must have length T with entries in [0, 1].
    """
    q_path = np.asarray(q_path, dtype=float)
    if len(q_path) != T:
        raise ValueError(f"q_path has length {len(q_path)}, expected T={T}")
    if np.any(q_path < 0) or np.any(q_path > 1):
        raise ValueError("q_path entries must lie in [0, 1]")
    m = spec.m
    ei, ej = spec.edge_idx
    x = np.zeros((T + 1, m), dtype=np.int64)
    Z = np.zeros((T, m, m), dtype=np.int64)
    y = np.zeros(T, dtype=np.int64)
    x[0] = sample_multinomial(rng, spec.n, spec.pi0)
    for t in range(1, T + 1):
        z = _step_transitions(rng, spec, x[t - 1], t)
        Z[t - 1] = z
        x[t] = z.sum(axis=0)
        y[t - 1] = sample_binomial(rng, int(z[ei, ej]), q_path[t - 1])
    return Trajectory(x=x, Z=Z, q=q_path.copy(), y=y)
