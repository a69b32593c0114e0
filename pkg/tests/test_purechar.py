"""Pure-characteristics evaluator: closed forms, Monte Carlo equivalence,
quadrature cross-checks, and agreement between the two evaluation paths."""

import numpy as np
import pytest
from scipy.stats import norm

import demandinv as di
from oracles import mc_purechar_shares, mc_standard_errors, purechar_share_quadrature


def single_product(b, extra_cols=1, n=1):
    """One product whose line is x + b t; remaining taste columns are zeroed."""
    z = np.zeros((1, 1 + extra_cols))
    z[0, 0] = b
    nu_rest = np.zeros((n, extra_cols))
    beta = np.ones(1 + extra_cols)
    return di.PureCharMarket(z=z, nu_rest=nu_rest, beta=beta)


class TestClosedForms:
    def test_unit_slope_share_is_normal_cdf(self):
        market = single_product(1.0)
        for x in (-2.0, 0.0, 1.3, 4.0):
            ev = market.evaluate(np.array([x]))
            assert ev.shares[0] == pytest.approx(norm.cdf(x), abs=1e-15)

    def test_negative_slope_share(self):
        # x + b t > 0 with b < 0 holds for t < x/|b|
        market = single_product(-2.0)
        for x in (-1.0, 0.5, 2.0):
            ev = market.evaluate(np.array([x]))
            assert ev.shares[0] == pytest.approx(norm.cdf(x / 2.0), abs=1e-15)

    def test_welfare_at_zero_is_normal_density(self):
        # E max(0, t) = phi(0)
        ev = single_product(1.0).evaluate(np.array([0.0]))
        assert ev.welfare == pytest.approx(0.3989422804014327, abs=1e-16)

    def test_welfare_expected_positive_part(self):
        # E max(0, x + t) = x * Phi(x) + phi(x)
        market = single_product(1.0)
        for x in (-1.5, 0.7, 2.2):
            ev = market.evaluate(np.array([x]))
            expected = x * norm.cdf(x) + norm.pdf(x)
            assert ev.welfare == pytest.approx(expected, rel=1e-14)

    def test_deep_tail_share_is_exact_zero(self):
        ev = single_product(1.0).evaluate(np.array([-40.0]))
        assert ev.shares[0] == 0.0

    def test_two_products_equal_lines_split_by_index(self):
        # identical slopes and intercepts: product 0 wins the tie everywhere
        z = np.array([[1.0, 0.0], [1.0, 0.0]])
        market = di.PureCharMarket(z=z, nu_rest=np.zeros((1, 1)), beta=np.ones(2))
        ev = market.evaluate(np.zeros(2))
        assert ev.shares[0] == pytest.approx(0.5, abs=1e-15)
        assert ev.shares[1] == 0.0

    def test_heterogeneous_intercepts_average_over_consumers(self):
        # two consumers shifting the line by +/- 1 through the taste column
        z = np.array([[1.0, 1.0]])
        nu_rest = np.array([[1.0], [-1.0]])
        market = di.PureCharMarket(z=z, nu_rest=nu_rest, beta=np.ones(2))
        ev = market.evaluate(np.array([0.5]))
        expected = 0.5 * (norm.cdf(1.5) + norm.cdf(-0.5))
        assert ev.shares[0] == pytest.approx(expected, abs=1e-15)


class TestJacobian:
    def test_matches_finite_differences(self):
        market, x_star, _ = di.make_purechar_instance(4, 3, 60, seed=5)
        rng = np.random.default_rng(11)
        for _ in range(4):
            x = x_star + rng.normal(scale=0.5, size=4)
            ev = market.evaluate(x, want_jacobian=True)
            fd = np.empty((4, 4))
            h = 1e-6
            for q in range(4):
                step = np.zeros(4)
                step[q] = h
                up = market.evaluate(x + step).shares
                dn = market.evaluate(x - step).shares
                fd[:, q] = (up - dn) / (2 * h)
            assert np.max(np.abs(ev.jacobian - fd)) < 1e-5

    def test_symmetric_and_diagonally_dominant(self):
        market, x_star, _ = di.make_purechar_instance(6, 3, 80, seed=2)
        ev = market.evaluate(x_star, want_jacobian=True)
        jac = ev.jacobian
        assert np.max(np.abs(jac - jac.T)) == 0.0
        # off-diagonal entries are nonpositive, diagonal nonnegative
        off = jac - np.diag(np.diag(jac))
        assert np.all(off <= 0.0)
        assert np.all(np.diag(jac) >= 0.0)
        # row sums bounded by the diagonal: outside option absorbs the rest
        assert np.all(jac.sum(axis=1) >= -1e-15)


class TestAgainstOracles:
    def test_monte_carlo_choice_share_equivalence(self):
        market, x_star, sigma_star = di.make_purechar_instance(5, 3, 30, seed=6)
        hat, total = mc_purechar_shares(market.z, market.nu_rest, x_star, 1_000_000, seed=0)
        se = mc_standard_errors(sigma_star, total)
        gap = np.abs(hat - sigma_star)
        assert np.all(gap <= np.maximum(3.0 * se, 1e-12))

    def test_quadrature_share_equivalence(self):
        for seed in (0, 3, 8):
            market, x_star, sigma_star = di.make_purechar_instance(5, 3, 25, seed=seed)
            approx = purechar_share_quadrature(market.z, market.nu_rest, x_star)
            assert np.max(np.abs(approx - sigma_star)) < 1e-3


class TestEvaluationPaths:
    def test_sweep_matches_vectorized_on_generic_market(self):
        for seed in (1, 4, 9):
            market, x_star, _ = di.make_purechar_instance(7, 3, 40, seed=seed)
            assert market._generic
            a = market.intercepts(x_star)
            fast = market._evaluate_intervals(a, True)
            slow = market._evaluate_sweep(a, True)
            assert abs(fast.welfare - slow.welfare) < 1e-13
            assert np.max(np.abs(fast.shares - slow.shares)) < 1e-13
            assert np.max(np.abs(fast.jacobian - slow.jacobian)) < 1e-13

    def test_duplicate_slopes_fall_back_to_sweep(self):
        z = np.array([[1.0, 0.3], [1.0, -0.2], [0.5, 0.1]])
        nu_rest = np.random.default_rng(0).standard_normal((20, 1))
        market = di.PureCharMarket(z=z, nu_rest=nu_rest, beta=np.ones(2))
        assert not market._generic
        x = np.array([0.2, -0.1, 0.4])
        ev = market.evaluate(x, want_jacobian=True)
        approx = purechar_share_quadrature(z, nu_rest, x)
        assert np.max(np.abs(ev.shares - approx)) < 1e-3
        assert np.max(np.abs(ev.jacobian - ev.jacobian.T)) == 0.0

    def test_shares_plus_outside_sum_to_one(self):
        for seed in range(6):
            market, x_star, _ = di.make_purechar_instance(8, 4, 50, seed=seed)
            shares = market.evaluate(x_star).shares
            assert np.all(shares >= 0.0)
            assert abs(shares.sum()) <= 1.0 + 1e-12

    def test_welfare_nonnegative(self):
        # the outside payoff is zero so the best option is never worse
        for seed in range(4):
            market, x_star, _ = di.make_purechar_instance(5, 3, 30, seed=seed)
            rng = np.random.default_rng(seed + 100)
            for _ in range(3):
                x = rng.normal(scale=3.0, size=5)
                assert market.evaluate(x).welfare >= 0.0

    def test_deterministic_bit_identical(self):
        market, x_star, _ = di.make_purechar_instance(6, 3, 40, seed=12)
        first = market.evaluate(x_star, want_jacobian=True)
        second = market.evaluate(x_star, want_jacobian=True)
        assert np.array_equal(first.shares, second.shares)
        assert first.welfare == second.welfare
        assert np.array_equal(first.jacobian, second.jacobian)


class TestInstanceConstruction:
    def test_same_seed_reproduces(self):
        a_market, a_x, a_s = di.make_purechar_instance(5, 3, 20, seed=42)
        b_market, b_x, b_s = di.make_purechar_instance(5, 3, 20, seed=42)
        assert np.array_equal(a_market.z, b_market.z)
        assert np.array_equal(a_market.nu_rest, b_market.nu_rest)
        assert np.array_equal(a_market.beta, b_market.beta)
        assert np.array_equal(a_x, b_x)
        assert np.array_equal(a_s, b_s)

    def test_truth_is_consistent(self):
        market, x_star, sigma_star = di.make_purechar_instance(6, 4, 35, seed=7)
        assert np.array_equal(x_star, market.z @ market.beta)
        assert np.array_equal(market.evaluate(x_star).shares, sigma_star)

    def test_normalized_taste_coefficient(self):
        market, _, _ = di.make_purechar_instance(4, 3, 10, seed=0)
        assert market.beta[0] == 1.0

    def test_dimension_validation(self):
        with pytest.raises(di.InvalidInputError):
            di.make_purechar_instance(0, 2, 5, seed=0)
        with pytest.raises(di.InvalidInputError):
            di.make_purechar_instance(3, 1, 5, seed=0)
        with pytest.raises(di.InvalidInputError):
            di.make_purechar_instance(3, 2, 0, seed=0)

    def test_market_validation(self):
        with pytest.raises(di.InvalidInputError):
            di.PureCharMarket(z=np.zeros((2, 1)), nu_rest=np.zeros((3, 0)), beta=np.ones(1))
        with pytest.raises(di.InvalidInputError):
            # normalization broken
            di.PureCharMarket(
                z=np.ones((2, 2)), nu_rest=np.zeros((3, 1)), beta=np.array([2.0, 1.0])
            )
        with pytest.raises(di.InvalidInputError):
            di.PureCharMarket(
                z=np.full((2, 2), np.nan), nu_rest=np.zeros((3, 1)), beta=np.ones(2)
            )
        with pytest.raises(di.InvalidInputError):
            # taste draws must match M - 1 columns
            di.PureCharMarket(z=np.ones((2, 3)), nu_rest=np.zeros((3, 1)), beta=np.ones(3))

    def test_arrays_are_frozen(self):
        market, _, _ = di.make_purechar_instance(3, 2, 5, seed=1)
        with pytest.raises(ValueError):
            market.z[0, 0] = 9.0

    def test_evaluate_validates_input(self):
        market, _, _ = di.make_purechar_instance(3, 2, 5, seed=1)
        with pytest.raises(di.InvalidInputError):
            market.evaluate(np.zeros(4))
        with pytest.raises(di.InvalidInputError):
            market.evaluate(np.array([0.0, np.nan, 0.0]))
