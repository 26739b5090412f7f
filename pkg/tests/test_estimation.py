import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_spd
from spatial_whitening.baselines import cholesky_whitening, pca_whitening
from spatial_whitening.errors import InvalidArgumentError, NumericFailure, UndefinedEstimateError
from spatial_whitening.estimation import (
    BitAllocation,
    allocate_bits,
    analytic_mse,
    approximation_gap,
    crb,
    fuse,
    fusion_weights,
    quantization_noise,
    quantize,
    quantize_array,
    scheme_variances,
    solve_budget,
)
from spatial_whitening.network import SparsityPattern
from spatial_whitening.whitening import WhiteningProblem, optimize


class TestAllocateBits:
    def test_hand_values(self):
        assert allocate_bits([1.0], 1.0).tolist() == [1]
        assert allocate_bits([1.0], 1 / 3).tolist() == [2]

    def test_huge_lambda(self):
        assert allocate_bits([0.5, 1.0, 1.5], 1e12).tolist() == [0, 0, 0]
        assert allocate_bits([0.5, 1.0], float("inf")).tolist() == [0, 0]

    def test_rounding_and_floor(self):
        # log2(1 + 1/v) for v = 1/(2**0.4 - 1) is 0.4 -> 0; for 2**0.6 it is 0.6 -> 1
        v = 1 / (2.0 ** np.array([0.4, 0.6, 2.49, 2.51]) - 1)
        assert allocate_bits(v, 1.0).tolist() == [0, 1, 2, 3]

    def test_bad_lambda(self):
        with pytest.raises(InvalidArgumentError):
            allocate_bits([1.0], 0.0)


class TestSolveBudget:
    def test_equal_variances(self):
        alloc = solve_budget(np.ones(10), 10)
        assert alloc.bits.tolist() == [1] * 10
        assert alloc.total == 10

    def test_zero_budget(self):
        alloc = solve_budget(np.ones(5), 0)
        assert alloc.total == 0
        assert not alloc.active.any()

    def test_gap_rounds_down(self):
        alloc = solve_budget(np.ones(4), 6)
        assert alloc.total == 4
        assert alloc.budget == 6

    def test_negative_budget(self):
        with pytest.raises(InvalidArgumentError):
            solve_budget(np.ones(3), -1)

    @pytest.mark.parametrize("seed", range(5))
    def test_exact_and_monotone(self, seed):
        rng = np.random.default_rng(seed)
        var = rng.uniform(0.5, 1.5, 30)
        order = np.argsort(var)
        for budget in range(0, 400, 7):
            alloc = solve_budget(var, budget)
            assert alloc.total == budget
            assert np.array_equal(allocate_bits(var, alloc.lam), alloc.bits)
            # smaller variance never gets fewer bits
            assert np.all(np.diff(alloc.bits[order]) <= 0)
            assert np.array_equal(alloc.active, alloc.bits >= 1)

    def test_budget_too_large(self):
        alloc = solve_budget(np.ones(2), 10_000)
        assert alloc.total <= 10_000


class TestQuantize:
    def test_one_bit_at_zero(self):
        rng = np.random.default_rng(0)
        m = np.array([quantize(0.0, 1, 1.0, rng) for _ in range(20000)])
        assert set(np.unique(m)) == {-1.0, 1.0}
        assert abs(np.mean(m == -1.0) - 0.5) < 4 * np.sqrt(0.25 / 20000)

    def test_two_bits(self):
        rng = np.random.default_rng(1)
        m = quantize_array(np.full(40000, 0.5), 2, 1.0, rng)
        assert set(np.round(np.unique(m), 12)) == {round(1 / 3, 12), 1.0}
        p = np.mean(np.isclose(m, 1 / 3))
        assert abs(p - 0.75) < 4 * np.sqrt(0.75 * 0.25 / 40000)

    @pytest.mark.parametrize("x", [-1.0, -1 / 3, 1 / 3, 1.0])
    def test_grid_points_are_fixed(self, x):
        rng = np.random.default_rng(2)
        for _ in range(50):
            assert quantize(x, 2, 1.0, rng) == pytest.approx(x, abs=1e-15)

    def test_errors(self):
        rng = np.random.default_rng(0)
        with pytest.raises(InvalidArgumentError):
            quantize(0.0, 0, 1.0, rng)
        with pytest.raises(InvalidArgumentError):
            quantize(1.5, 2, 1.0, rng)
        with pytest.raises(InvalidArgumentError):
            quantize_array(np.zeros(2), [1, 0], 1.0, rng)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(-1, 1), st.integers(1, 12), st.floats(0.1, 100))
    def test_unbiased_cell(self, u, b, U):
        x = u * U
        step = 2 * U / (2**b - 1)
        j = min(np.floor((x + U) / step), 2**b - 2)
        lo, hi = -U + j * step, -U + (j + 1) * step
        assert lo - 1e-12 * U <= x <= hi + 1e-12 * U
        q = (hi - x) / step
        assert q * lo + (1 - q) * hi == pytest.approx(x, abs=1e-12 * U)
        assert (hi - x) * (x - lo) <= step**2 / 4 + 1e-12 * U * U

    def test_conditional_variance(self):
        rng = np.random.default_rng(3)
        U, b, x = 20.0, 3, 1.3
        step = 2 * U / 7
        lo = -U + np.floor((x + U) / step) * step
        m = quantize_array(np.full(100_000, x), b, U, rng)
        expected = (lo + step - x) * (x - lo)
        assert abs(m.var() - expected) < 0.02 * expected
        assert expected <= U**2 / (2**b - 1) ** 2


class TestFuse:
    def test_identity_is_mean(self):
        m = np.array([1.0, 2.0, 6.0])
        assert fuse(m, np.eye(3)) == pytest.approx(3.0)

    def test_weighted(self):
        np.testing.assert_allclose(fusion_weights(np.diag([1.0, 4.0])), [0.8, 0.2])
        assert fuse([2.0, 6.0], np.diag([1.0, 4.0])) == pytest.approx(2.8)

    def test_constant_vector(self, rng):
        c = random_spd(rng, 5)
        assert fuse(np.full(5, 3.7), c) == pytest.approx(3.7, rel=1e-12)
        assert fusion_weights(c).sum() == pytest.approx(1.0, rel=1e-12)

    def test_batch(self, rng):
        c = random_spd(rng, 4)
        m = rng.standard_normal((10, 4))
        np.testing.assert_allclose(fuse(m, c), [fuse(row, c) for row in m])

    def test_errors(self):
        with pytest.raises(NumericFailure):
            fuse([1.0, 1.0], np.array([[1.0, 2.0], [2.0, 1.0]]))
        with pytest.raises(UndefinedEstimateError):
            fuse(np.zeros(0), np.zeros((0, 0)))


class TestAnalyticMse:
    def test_no_quantization_is_crb(self, rng):
        c = random_spd(rng, 6)
        assert analytic_mse(c, np.zeros(6)) == pytest.approx(crb(c), rel=1e-12)

    def test_identity(self):
        assert analytic_mse(np.eye(4), np.full(4, 0.3)) == pytest.approx(1.3 / 4)

    def test_more_bits_never_hurt(self, rng):
        c = random_spd(rng, 8)
        U = 20.0
        bits = np.ones(8, dtype=int)
        prev = np.inf
        for step in range(40):
            q = U**2 / (2.0**bits - 1) ** 2
            mse = analytic_mse(c, q)
            assert mse <= prev * (1 + 1e-12)
            prev = mse
            bits[step % 8] += 1

    def test_no_active(self):
        with pytest.raises(UndefinedEstimateError):
            analytic_mse(np.zeros((0, 0)), np.zeros(0))

    def test_shape_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            analytic_mse(np.eye(2), np.zeros(3))

    def test_quantization_noise_active_only(self):
        alloc = BitAllocation(np.array([0, 1, 3]), 1.0, 4, 20.0)
        np.testing.assert_allclose(quantization_noise(alloc), [400.0, 400.0 / 49])


class TestCrb:
    def test_identity(self):
        assert crb(np.eye(5)) == pytest.approx(0.2)
        assert crb(2.5 * np.eye(5)) == pytest.approx(0.5)

    @pytest.mark.parametrize("seed", range(5))
    def test_invariant_under_mean_preserving(self, seed):
        rng = np.random.default_rng(seed)
        s = random_spd(rng, 6)
        t = rng.standard_normal((6, 6)) + 2 * np.eye(6)
        t /= t.sum(axis=1)[:, None]
        for w in (t, pca_whitening(s).transform, cholesky_whitening(s).transform):
            assert crb(w @ s @ w.T) == pytest.approx(crb(s), rel=1e-10)

    def test_singular(self):
        with pytest.raises(NumericFailure):
            crb(np.ones((2, 2)))


class TestSchemeVariances:
    def test_identity_transform(self, rng):
        s = random_spd(rng, 4)
        np.testing.assert_allclose(scheme_variances(np.eye(4), s), np.diag(s))

    def test_full_pattern_matches_approximation(self, rng):
        s = random_spd(rng, 6)
        sol = optimize(WhiteningProblem(s, SparsityPattern.full(6)))
        assert approximation_gap(sol, s) < 1e-6

    def test_identity_pattern_diagonal_sigma(self):
        s = np.diag([0.5, 1.2, 2.0])
        sol = optimize(WhiteningProblem(s, SparsityPattern.identity(3)))
        np.testing.assert_allclose(scheme_variances(sol, s), np.diag(s))

    def test_global_whitening(self, rng):
        s = random_spd(rng, 5)
        g = pca_whitening(s)
        np.testing.assert_allclose(scheme_variances(g, s), g.variances, rtol=1e-9)
