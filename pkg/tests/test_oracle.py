"""The verifiers themselves: quadrature convergence, enumeration cross-checks."""

import math
import warnings

import numpy as np
import pytest

from lawpal.model import CompartmentalSpec, constant_kernel
from lawpal.observation import FixedReporting, TruncNormalReporting
from lawpal.oracle import (
    EnumerationBudgetError,
    enumerate_loglik,
    grid_argmax,
    quad_marginal,
    quad_posterior_mean_q,
)
from lawpal.randkit import (
    TruncNormalParams,
    child_rng,
    log_binom_pmf,
    log_poisson_pmf,
    rng_from_seed,
    sample_trunc_normal,
)
from lawpal.simulate import simulate


class TestQuadMarginal:
    def test_delta_limit(self):
        val = quad_marginal(100.0, 45, 0.5, 1e-10)
        assert abs(val - log_poisson_pmf(45, 50.0)) < 1e-4

    def test_empty_case_probability_one(self):
        assert quad_marginal(0.0, 0, 0.5, 0.1) == pytest.approx(0.0, abs=1e-12)

    def test_node_doubling_converged(self):
        for lam, y in ((100.0, 45), (1000.0, 450), (10000.0, 4500), (50.0, 0)):
            a = quad_marginal(lam, y, 0.5, 0.1, n_panels=64, tol=0.0, max_panels=64)
            b = quad_marginal(lam, y, 0.5, 0.1, n_panels=128, tol=0.0, max_panels=128)
            assert abs(a - b) < 1e-9

    def test_monte_carlo_cross_check(self):
        lam, y, mu, s2 = 1000.0, 450, 0.5, 0.1
        rng = rng_from_seed(202)
        qs = sample_trunc_normal(rng, TruncNormalParams(mu, s2), size=10**6)
        log_terms = log_poisson_pmf(y, qs * lam)
        weights = np.exp(log_terms)
        est = weights.mean()
        se = weights.std(ddof=1) / math.sqrt(len(weights))
        quad = math.exp(quad_marginal(lam, y, mu, s2))
        assert abs(quad - est) <= 3 * se


class TestPosteriorMean:
    def test_prior_mean_when_no_data(self):
        params = TruncNormalParams(0.3, 0.05)
        draws = sample_trunc_normal(rng_from_seed(5), params, size=10**6)
        val = quad_posterior_mean_q(0.0, 0, 0.3, 0.05)
        assert abs(val - draws.mean()) < 1e-3

    def test_data_dominant_limit(self):
        val = quad_posterior_mean_q(10**5, 45000, 0.5, 0.1)
        assert abs(val - 0.45) < 1e-3

    def test_gap_to_mode_small_at_scale(self):
        from lawpal.filters import laplace_qbar

        for lam, frac in ((1000.0, 0.45), (2000.0, 0.6), (5000.0, 0.3)):
            y = int(frac * lam)
            qb = laplace_qbar(lam, y, 0.5, 0.1)
            assert abs(quad_posterior_mean_q(lam, y, 0.5, 0.1) - qb) <= 0.01


class TestGridArgmax:
    def test_closed_form_no_data(self):
        assert abs(grid_argmax(10.0, 0, 0.5, 0.01) - 0.4) < 1e-6

    def test_symmetric_construction(self):
        assert abs(grid_argmax(50.0, 25, 0.5, 0.01) - 0.5) < 1e-6

    def test_boundary_cases(self):
        assert grid_argmax(100.0, 0, 0.5, 0.01) < 1e-6
        assert grid_argmax(10.0, 100, 0.5, 0.1) > 1.0 - 1e-6


class TestEnumerate:
    def toy_spec(self, n=12, p_move=0.35):
        return CompartmentalSpec(
            n=n,
            pi0=np.array([0.8, 0.2]),
            kernel=constant_kernel([[1.0 - p_move, p_move], [0.0, 1.0]]),
            obs_edge=(1, 2),
        )

    def test_single_step_deterministic_kernel(self):
        # everyone moves: the flow equals the whole first compartment
        n = 10
        spec = CompartmentalSpec(
            n=n,
            pi0=np.array([1.0, 0.0]),
            kernel=constant_kernel([[0.0, 1.0], [0.0, 1.0]]),
            obs_edge=(1, 2),
        )
        obs = TruncNormalReporting(0.5, 0.1)
        y = 4
        got = enumerate_loglik(spec, obs, [y])
        params = TruncNormalParams(0.5, 0.1)
        x, w = np.polynomial.legendre.leggauss(400)
        qs = 0.5 * (x + 1.0)
        from lawpal.randkit import trunc_normal_logpdf

        integrand = np.exp(log_binom_pmf(y, n, qs) + trunc_normal_logpdf(qs, params))
        expected = math.log(float(np.sum(integrand * 0.5 * w)))
        assert abs(got - expected) < 1e-9

    def test_monte_carlo_cross_check(self):
        # importance-free MC over latent paths, vectorized over 10^7 draws
        spec = self.toy_spec(n=10)
        obs = TruncNormalReporting(0.5, 0.1)
        y = [2, 3]
        exact = enumerate_loglik(spec, obs, y)

        rng = rng_from_seed(77)
        R = 10**7
        x1 = rng.binomial(10, 0.8, size=R)  # first compartment of x0
        z1 = rng.binomial(x1, 0.35, size=R)  # step-1 flow on the edge
        x1b = x1 - z1
        z2 = rng.binomial(x1b, 0.35, size=R)  # step-2 flow

        # marginal observation density tables g[z] = P(y_t | flow=z)
        params = TruncNormalParams(0.5, 0.1)
        xg, wg = np.polynomial.legendre.leggauss(200)
        qs = 0.5 * (xg + 1.0)
        from lawpal.randkit import trunc_normal_logpdf

        pdf = np.exp(trunc_normal_logpdf(qs, params)) * 0.5 * wg

        def g_table(y_t):
            zz = np.arange(11)
            mat = np.exp(log_binom_pmf(y_t, zz[:, None], qs[None, :]))
            return mat @ pdf

        g1, g2 = g_table(y[0]), g_table(y[1])
        vals = g1[z1] * g2[z2]
        est, se = vals.mean(), vals.std(ddof=1) / math.sqrt(R)
        assert abs(math.exp(exact) - est) <= 3 * se

    def test_bpf_agreement(self):
        spec = self.toy_spec(n=12)
        obs = TruncNormalReporting(0.5, 0.1)
        traj = simulate(spec, obs, 3, rng_from_seed(6))
        exact = enumerate_loglik(spec, obs, traj.y)
        from lawpal.bpf import run_bpf

        vals = np.array(
            [
                run_bpf(spec, obs, traj.y, 20000, child_rng(88, r)).log_likelihood
                for r in range(10)
            ]
        )
        assert abs(vals.mean() - exact) <= 3 * vals.std(ddof=1)

    def test_permutation_invariance(self):
        # relabel compartments 2 and 3; likelihood must not change
        k = np.array(
            [
                [0.6, 0.3, 0.1],
                [0.2, 0.5, 0.3],
                [0.1, 0.1, 0.8],
            ]
        )
        perm = [0, 2, 1]
        k_perm = k[np.ix_(perm, perm)]
        obs = TruncNormalReporting(0.4, 0.05)
        y = [1, 2]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            spec_a = CompartmentalSpec(
                n=6, pi0=np.array([0.5, 0.3, 0.2]), kernel=constant_kernel(k), obs_edge=(1, 2)
            )
            spec_b = CompartmentalSpec(
                n=6, pi0=np.array([0.5, 0.2, 0.3]), kernel=constant_kernel(k_perm), obs_edge=(1, 3)
            )
        a = enumerate_loglik(spec_a, obs, y)
        b = enumerate_loglik(spec_b, obs, y)
        assert abs(a - b) < 1e-10

    def test_budget_refusal(self):
        spec = CompartmentalSpec(
            n=500,
            pi0=np.array([0.8, 0.2]),
            kernel=constant_kernel([[0.7, 0.3], [0.0, 1.0]]),
            obs_edge=(1, 2),
        )
        with pytest.raises(EnumerationBudgetError) as err:
            enumerate_loglik(spec, FixedReporting(0.5), [1, 2, 3])
        assert err.value.estimated > err.value.budget

    def test_fixed_q_variant(self):
        spec = self.toy_spec(n=8)
        obs = FixedReporting(0.6)
        traj = simulate(spec, obs, 2, rng_from_seed(9))
        exact = enumerate_loglik(spec, obs, traj.y)
        assert math.isfinite(exact) and exact < 0
