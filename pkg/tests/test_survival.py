import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cploc._seeding import derive
from cploc.detectors import cusum_lr, stop_time
from cploc.models import Bernoulli, Gaussian
from cploc.survival import SurvivalCurve, curve_from_stop_times, estimate_survival, unit_curve


def _geometric_detector():
    # a single 1 pushes the CUSUM to 9 >= 5, a 0 resets it below 1,
    # so on Bernoulli(p) data tau is geometric: P(tau >= t) = (1 - p)^(t - 1)
    return cusum_lr(Bernoulli(0.1), Bernoulli(0.9), 5.0)


class TestExamples:
    def test_asymptotic_full_survival(self):
        c = curve_from_stop_times([9, 9, 9, 9, 9], 4, "asymptotic")
        assert c.r(4) == 1.0

    def test_asymptotic_no_survivors(self):
        c = curve_from_stop_times([1, 2, 1, 3, 2], 4, "asymptotic")
        assert c.r(4) == pytest.approx(1 / 6)

    def test_negative_binomial_third_run_is_second_survivor(self):
        c = curve_from_stop_times([5, 1, 7, 2], 4, "negative_binomial", r=2)
        assert c.N[3] == 3
        assert c.r(4) == pytest.approx(0.5)

    def test_plain_mean(self):
        c = curve_from_stop_times([1, 2, 3, 4], 4, "plain")
        assert c.values.tolist() == [1.0, 0.75, 0.5, 0.25]

    def test_detector_is_geometric(self):
        spec = _geometric_detector()
        assert stop_time(spec, [0, 0, 0, 1]) == 4
        assert stop_time(spec, [0] * 10) == 0


class TestInvariants:
    @given(st.lists(st.integers(1, 30), min_size=3, max_size=40), st.integers(1, 25))
    @settings(max_examples=80, deadline=None)
    def test_nonincreasing_and_positive(self, taus, cap):
        for kind in ("plain", "asymptotic"):
            v = curve_from_stop_times(taus, cap, kind).values
            assert np.all(np.diff(v) <= 0)
            assert np.all(v <= 1.0)
            if kind == "asymptotic":
                assert np.all(v > 0)

    @given(st.lists(st.integers(1, 30), min_size=3, max_size=40))
    @settings(max_examples=80, deadline=None)
    def test_negative_binomial_positive_and_nonincreasing(self, taus):
        taus = taus + [99, 99]
        v = curve_from_stop_times(taus, 30, "negative_binomial", r=2).values
        assert np.all(v > 0) and np.all(np.diff(v) <= 1e-15)

    def test_first_value_is_one_when_all_survive_step_one(self):
        c = estimate_survival(Gaussian(0), cusum_lr(Gaussian(0), Gaussian(1), 1000), 50, N=40)
        assert c.r(1) == 1.0

    def test_censored_runs_survive_through_cap(self):
        c = estimate_survival(Bernoulli(0.0), _geometric_detector(), 20, N=10, kind="plain")
        assert np.all(c.values == 1.0)

    def test_unit_curve(self):
        assert unit_curve(5).values.tolist() == [1.0] * 5


class TestErrors:
    def test_bad_kind(self):
        with pytest.raises(ValueError):
            curve_from_stop_times([1, 2], 2, "bogus")

    def test_negative_binomial_needs_two(self):
        with pytest.raises(ValueError):
            estimate_survival(Bernoulli(0.2), _geometric_detector(), 5, kind="negative_binomial", r=1)

    def test_non_positive_sizes(self):
        with pytest.raises(ValueError):
            estimate_survival(Bernoulli(0.2), _geometric_detector(), 5, N=0)

    def test_index_beyond_curve(self):
        with pytest.raises(IndexError):
            SurvivalCurve(np.ones(3), "plain", 3).r(4)


class TestAgainstGeometricTruth:
    p = 0.2

    def _truth(self, t):
        return (1 - self.p) ** (np.asarray(t) - 1)

    def test_negative_binomial_is_unbiased(self):
        cap, reps = 6, 2000
        vals = np.array([estimate_survival(Bernoulli(self.p), _geometric_detector(), cap,
                                           N=2, kind="negative_binomial", seed=s).values
                         for s in range(reps)])
        se = vals.std(axis=0, ddof=1) / math.sqrt(reps)
        err = np.abs(vals.mean(axis=0) - self._truth(np.arange(1, cap + 1)))
        assert np.all(err <= 2 * se + 1e-12)

    def test_plain_is_binomial(self):
        N, cap = 4000, 8
        c = estimate_survival(Bernoulli(self.p), _geometric_detector(), cap, N=N, kind="plain", seed=3)
        truth = self._truth(np.arange(1, cap + 1))
        se = np.sqrt(truth * (1 - truth) / N)
        assert np.all(np.abs(c.values - truth) <= 4 * se + 1e-12)


class TestSeeding:
    def test_same_seed_same_curve(self):
        a = estimate_survival(Gaussian(0), cusum_lr(Gaussian(0), Gaussian(1), 50), 60, N=30, seed=4)
        b = estimate_survival(Gaussian(0), cusum_lr(Gaussian(0), Gaussian(1), 50), 60, N=30, seed=4)
        assert a.values.tobytes() == b.values.tobytes()

    def test_namespaces_are_disjoint(self):
        u = derive(7, "survival", 3).random(8)
        v = derive(7, "adaptive", 3).random(8)
        assert not np.array_equal(u, v)

    def test_csv(self):
        text = curve_from_stop_times([1, 3], 2, "plain").to_csv()
        assert text == "t,r_t\n1,1\n2,0.5\n"
