"""Covariance functions and marginal-likelihood hyperparameter search."""

import math

import numpy as np
import pytest

import _oracles as oracle
from recovr.errors import InputError, RangeError
from recovr.kernels import (
    KernelParams,
    default_init_grid,
    fit_hyperparameters,
    gram_matrix,
    kernel_eval,
    log_marginal_likelihood,
)


class TestKernelEval:
    def test_zero_distance(self):
        p = KernelParams(variance=1.0, length_scale=0.2)
        assert kernel_eval(p, 0.5, 0.5) == pytest.approx(1.0)

    def test_distance_of_one_length_scale(self):
        p = KernelParams(variance=2.0, length_scale=0.2)
        assert kernel_eval(p, 0.0, 0.2) == pytest.approx(2.0 * math.exp(-0.5), rel=1e-6)

    def test_far_apart_small_but_not_underflowed(self):
        p = KernelParams(variance=1.0, length_scale=0.1)
        val = kernel_eval(p, 0.0, 1.0)
        assert val == pytest.approx(math.exp(-50.0), rel=1e-12)
        assert val > 0.0

    def test_symmetry_random_inputs(self):
        rng = np.random.default_rng(3)
        p = KernelParams(variance=1.7, length_scale=0.31)
        for _ in range(50):
            x, y = rng.uniform(-5.0, 5.0, 2)
            assert kernel_eval(p, x, y) == kernel_eval(p, y, x)

    def test_matern52_matches_direct_formula(self):
        p = KernelParams(variance=1.4, length_scale=0.25, kind="matern52")
        for r in (0.0, 0.05, 0.25, 0.7):
            assert kernel_eval(p, 0.1, 0.1 + r) == pytest.approx(
                oracle.matern52_value(1.4, 0.25, r), rel=1e-12
            )

    def test_invalid_params_rejected(self):
        with pytest.raises(RangeError):
            KernelParams(variance=0.0, length_scale=0.2)
        with pytest.raises(RangeError):
            KernelParams(variance=1.0, length_scale=-0.1)
        with pytest.raises(RangeError):
            KernelParams(variance=1.0, length_scale=0.2, noise_variance=-1e-3)
        with pytest.raises(InputError):
            KernelParams(variance=1.0, length_scale=0.2, kind="cubic")


class TestGramMatrix:
    def test_single_point(self):
        p = KernelParams(variance=1.3, length_scale=0.2)
        g = gram_matrix(p, [0.5])
        assert g.shape == (1, 1)
        assert g[0, 0] == pytest.approx(1.3)

    def test_constant_limit_at_huge_length_scale(self):
        p = KernelParams(variance=2.0, length_scale=1e6)
        g = gram_matrix(p, [0.0, 1.0])
        assert np.allclose(g, 2.0, rtol=1e-9)

    def test_three_point_psd(self):
        p = KernelParams(variance=1.0, length_scale=0.2)
        g = gram_matrix(p, [0.0, 0.5, 1.0])
        assert np.linalg.eigvalsh(g).min() >= -1e-10

    def test_psd_random_sets_up_to_50(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            n = int(rng.integers(2, 51))
            xs = rng.uniform(0.0, 1.0, n)
            var = float(rng.uniform(0.2, 3.0))
            p = KernelParams(variance=var, length_scale=float(rng.uniform(0.05, 1.0)))
            g = gram_matrix(p, xs)
            assert np.linalg.eigvalsh(g).min() >= -1e-8 * var

    def test_rectangular_matches_eval(self):
        p = KernelParams(variance=1.0, length_scale=0.3)
        xs, ys = [0.1, 0.4], [0.2, 0.8, 0.9]
        g = gram_matrix(p, xs, ys)
        assert g.shape == (2, 3)
        for i, x in enumerate(xs):
            for j, y in enumerate(ys):
                assert g[i, j] == pytest.approx(kernel_eval(p, x, y))

    def test_agrees_with_direct_formula(self):
        p = KernelParams(variance=0.8, length_scale=0.17)
        xs = np.linspace(0.0, 1.0, 9)
        assert np.allclose(gram_matrix(p, xs), oracle.se_kernel(0.8, 0.17, xs), rtol=1e-12)


class TestLogMarginalLikelihood:
    def test_matches_independent_formula(self):
        rng = np.random.default_rng(5)
        xs = np.sort(rng.uniform(0.0, 1.0, 12))
        ys = rng.uniform(0.0, 1.0, 12)
        p = KernelParams(variance=0.9, length_scale=0.25, noise_variance=0.05)
        ours = log_marginal_likelihood(p, xs, ys)
        ref = oracle.log_marginal_likelihood(0.9, 0.25, 0.05, xs, ys)
        assert ours == pytest.approx(ref, abs=1e-8)


def _gp_draw(seed, n=20, variance=1.0, length_scale=0.3):
    rng = np.random.default_rng(seed)
    xs = np.sort(rng.uniform(0.0, 1.0, n))
    K = oracle.se_kernel(variance, length_scale, xs)
    L = np.linalg.cholesky(K + 1e-12 * np.eye(n))
    return xs, L @ rng.standard_normal(n)


class TestFitHyperparameters:
    def test_generate_and_recover_length_scale(self):
        # noiseless draws from known (1, 0.3); >= 16 of 20 seeds must land
        # within a factor of 2, and every returned optimum must be at least
        # as good as the best point of an independent dense grid.
        hits = 0
        vs = np.exp(np.linspace(np.log(0.05), np.log(20.0), 20))
        ls = np.exp(np.linspace(np.log(0.03), np.log(3.0), 20))
        for seed in range(20):
            xs, ys = _gp_draw(seed)
            p = fit_hyperparameters(np.column_stack([xs, ys]), fix_noise=1e-8)
            if 0.15 <= p.length_scale <= 0.6:
                hits += 1
            fit_val = oracle.log_marginal_likelihood(
                p.variance, p.length_scale, 1e-8, xs, ys
            )
            grid_best = max(
                oracle.log_marginal_likelihood(v, l, 1e-8, xs, ys)
                for v in vs
                for l in ls
            )
            assert fit_val >= grid_best - 1e-6
        assert hits >= 16

    def test_constant_data_predicts_constant(self):
        xs = np.linspace(0.0, 1.0, 10)
        ys = np.full(10, 0.5)
        p = fit_hyperparameters(np.column_stack([xs, ys]))
        assert math.isfinite(p.variance) and math.isfinite(p.length_scale)
        # standard GP predictive mean under the fitted params
        K = gram_matrix(p, xs) + p.noise_variance * np.eye(10)
        grid = np.linspace(0.0, 1.0, 21)
        mean = gram_matrix(p, grid, xs) @ np.linalg.solve(K, ys)
        assert np.abs(mean - 0.5).max() <= 1e-6

    def test_two_points_rejected(self):
        with pytest.raises(InputError):
            fit_hyperparameters([(0.0, 0.1), (1.0, 0.9)])

    def test_deterministic(self):
        xs, ys = _gp_draw(42)
        train = np.column_stack([xs, ys])
        a = fit_hyperparameters(train)
        b = fit_hyperparameters(train)
        assert (a.variance, a.length_scale, a.noise_variance) == (
            b.variance,
            b.length_scale,
            b.noise_variance,
        )

    def test_improves_on_every_start(self):
        xs, ys = _gp_draw(7, n=15)
        train = np.column_stack([xs, ys])
        p = fit_hyperparameters(train)
        final = log_marginal_likelihood(p, xs, ys)
        for start in default_init_grid():
            assert final >= log_marginal_likelihood(start, xs, ys) - 1e-9

    def test_max_length_scale_respected(self):
        xs = np.linspace(0.0, 1.0, 10)
        ys = np.full(10, 0.5)  # favors huge length scales
        p = fit_hyperparameters(np.column_stack([xs, ys]), max_length_scale=0.4)
        assert p.length_scale <= 0.4 + 1e-12
