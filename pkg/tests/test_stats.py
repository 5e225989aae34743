import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from codetime.analysis.stats import (
    CorrelationReport,
    CostReport,
    binomial_sign_test,
    bootstrap_mean_difference,
    flag_rule_false_positive_rate,
    pearson,
    spearman,
    wilcoxon_signed_rank,
)
from codetime.ioutil import DataError


class TestPearson:
    def test_perfect_line(self):
        r = pearson([0, 1, 2, 3], [1, 3, 5, 7])
        assert r.coefficient == pytest.approx(1.0)
        assert r.slope == pytest.approx(2.0)
        assert r.n == 4

    def test_hand_computed_coefficient(self):
        x = [1.0, 2.0, 3.0, 4.0, 5.0]
        y = [2.0, 1.0, 4.0, 3.0, 5.0]
        xm, ym = np.mean(x), np.mean(y)
        num = sum((a - xm) * (b - ym) for a, b in zip(x, y))
        den = math.sqrt(sum((a - xm) ** 2 for a in x)
                        * sum((b - ym) ** 2 for b in y))
        r = pearson(x, y)
        assert r.coefficient == pytest.approx(num / den)
        assert r.method == "pearson"

    def test_constant_vector_rejected(self):
        with pytest.raises(DataError):
            pearson([1.0, 1.0, 1.0], [0.0, 1.0, 2.0])
        with pytest.raises(DataError):
            pearson([0.0, 1.0, 2.0], [5.0, 5.0, 5.0])

    def test_two_points_have_no_p_value(self):
        r = pearson([0.0, 1.0], [3.0, 4.0])
        assert r.p_value is None
        assert r.coefficient == pytest.approx(1.0)

    def test_length_mismatch_rejected(self):
        with pytest.raises(DataError):
            pearson([1.0, 2.0], [1.0, 2.0, 3.0])

    @given(st.lists(st.floats(-100, 100), min_size=3, max_size=30),
           st.floats(0.1, 10), st.floats(-5, 5))
    @settings(max_examples=40, deadline=None)
    def test_affine_invariance_of_coefficient(self, xs, scale, shift):
        x = np.asarray(xs)
        y = np.sin(x) + 0.1 * x
        if np.ptp(x) < 1e-3 or np.ptp(y) < 1e-3:
            return
        base = pearson(x, y).coefficient
        moved = pearson(scale * x + shift, y).coefficient
        assert moved == pytest.approx(base, abs=1e-9)


class TestSpearman:
    def test_monotone_nonlinear_is_perfect(self):
        x = [1.0, 2.0, 3.0, 4.0, 5.0]
        y = [math.exp(a) for a in x]
        assert spearman(x, y).coefficient == pytest.approx(1.0)
        assert pearson(x, y).coefficient < 1.0

    def test_tied_values_use_average_ranks(self):
        # ranks of x: 1.5, 1.5, 3, 4; scipy reference value pinned
        r = spearman([1.0, 1.0, 2.0, 3.0], [10.0, 20.0, 30.0, 40.0])
        assert r.coefficient == pytest.approx(0.9486832980505138)

    def test_reversed_order(self):
        r = spearman([1, 2, 3, 4, 5], [9, 7, 5, 3, 1])
        assert r.coefficient == pytest.approx(-1.0)


class TestCorrelationReport:
    def test_out_of_range_coefficient_rejected(self):
        with pytest.raises(DataError):
            CorrelationReport(method="pearson", coefficient=1.5, n=10,
                              p_value=0.5)

    def test_to_dict_omits_missing_slope(self):
        d = CorrelationReport(method="spearman", coefficient=0.5, n=8,
                              p_value=0.1).to_dict()
        assert "slope" not in d
        assert d["coefficient"] == 0.5


class TestBinomialSignTest:
    def test_fair_coin_extreme(self):
        # P(X=0 or X=10) for Binomial(10, 1/2) = 2/1024
        assert binomial_sign_test(0, 10) == pytest.approx(2.0 / 1024.0)
        assert binomial_sign_test(10, 10) == pytest.approx(2.0 / 1024.0)

    def test_balanced_outcome_caps_at_one(self):
        assert binomial_sign_test(5, 10) == 1.0

    def test_hand_computed_tail(self):
        # lower tail P(X <= 2 | n=10): (1 + 10 + 45) / 1024, doubled
        assert binomial_sign_test(2, 10) == pytest.approx(2 * 56 / 1024)

    def test_asymmetric_null(self):
        # P(X >= 3 | n=3, p=0.25) = 1/64, doubled
        assert binomial_sign_test(3, 3, p0=0.25) == pytest.approx(2 / 64)

    def test_input_validation(self):
        with pytest.raises(DataError):
            binomial_sign_test(5, 0)
        with pytest.raises(DataError):
            binomial_sign_test(11, 10)
        with pytest.raises(DataError):
            binomial_sign_test(1, 10, p0=1.0)

    @given(st.integers(1, 40), st.integers(0, 40))
    @settings(max_examples=60, deadline=None)
    def test_is_a_probability(self, n, k):
        if k > n:
            return
        p = binomial_sign_test(k, n)
        assert 0.0 < p <= 1.0


class TestFlagRule:
    def test_default_rule_mass(self):
        # flags fire on 0, 1, 9 or 10 of 10 parts: (1+10+10+1)/1024
        rate = flag_rule_false_positive_rate(10)
        assert rate == pytest.approx(22.0 / 1024.0)

    def test_whole_support_sums_to_one(self):
        assert flag_rule_false_positive_rate(
            6, flag_set=range(7)) == pytest.approx(1.0)

    def test_flag_outside_support_rejected(self):
        with pytest.raises(DataError):
            flag_rule_false_positive_rate(10, flag_set=(11,))


class TestBootstrapMeanDifference:
    def test_identical_samples_are_not_significant(self):
        rng = np.random.default_rng(0)
        a = rng.normal(0, 1, size=200)
        p = bootstrap_mean_difference(a, a.copy(), resamples=4000, seed=1)
        assert p > 0.5

    def test_planted_separation_is_significant(self):
        rng = np.random.default_rng(1)
        a = rng.normal(1.0, 0.5, size=200)
        b = rng.normal(-1.0, 0.5, size=200)
        p = bootstrap_mean_difference(a, b, resamples=4000, seed=2)
        assert p < 0.01

    def test_deterministic_for_a_seed(self):
        rng = np.random.default_rng(2)
        a = rng.normal(0.2, 1.0, size=50)
        b = rng.normal(0.0, 1.0, size=50)
        p1 = bootstrap_mean_difference(a, b, resamples=2000, seed=7)
        p2 = bootstrap_mean_difference(a, b, resamples=2000, seed=7)
        assert p1 == p2

    def test_never_exactly_zero(self):
        a = np.full(30, 10.0)
        b = np.full(30, -10.0)
        p = bootstrap_mean_difference(a, b, resamples=999, seed=0)
        assert p == pytest.approx(2.0 / 1000.0)

    def test_empty_sample_rejected(self):
        with pytest.raises(DataError):
            bootstrap_mean_difference([], [1.0])


class TestWilcoxon:
    def test_all_zero_deltas_rejected(self):
        with pytest.raises(DataError):
            wilcoxon_signed_rank([0.0, 0.0, 0.0])

    def test_too_few_nonzero_rejected(self):
        with pytest.raises(DataError):
            wilcoxon_signed_rank([1.0, -2.0, 3.0, 0.0, 0.0])

    def test_matches_scipy_on_clean_data(self):
        import scipy.stats as sps
        d = [1.2, -0.4, 2.5, 3.1, -0.9, 1.8, 2.2, -0.1, 0.7, 1.1]
        ref = sps.wilcoxon(d, zero_method="wilcox", correction=False,
                           method="approx").pvalue
        assert wilcoxon_signed_rank(d) == pytest.approx(float(ref))

    def test_strong_one_sided_shift_is_small(self):
        d = list(np.linspace(0.5, 2.0, 20))
        assert wilcoxon_signed_rank(d) < 0.001

    def test_zeros_are_dropped_not_counted(self):
        d = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]
        with_zeros = d + [0.0, 0.0, 0.0]
        assert wilcoxon_signed_rank(d) == pytest.approx(
            wilcoxon_signed_rank(with_zeros))


class TestCostReport:
    def test_p_value_range_enforced(self):
        with pytest.raises(DataError):
            CostReport(token_a="a", token_b="b", mean_delta_seconds=1.0,
                       p_value=1.5, n=10)

    def test_to_dict_round_trip(self):
        r = CostReport(token_a="x", token_b="y", mean_delta_seconds=-3.5,
                       p_value=0.02, n=40)
        d = r.to_dict()
        assert d == {"token_a": "x", "token_b": "y",
                     "mean_delta_seconds": -3.5, "p_value": 0.02, "n": 40}
