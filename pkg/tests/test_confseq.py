import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from cploc.confseq import (I_quadrature, Interval, ParamConfidenceSet, gaussian_ci, gaussian_cs,
                           gaussian_cs_radius, log_I, normal_quantile, param_set_union,
                           poisson_boundary, poisson_cs, union_intervals)
from cploc.survival import SurvivalCurve


def _mean_window(mean, n):
    # a window with exactly the requested mean
    x = np.random.default_rng(n).normal(size=n)
    return x - x.mean() + mean


class TestGaussianCS:
    def test_radius_at_hundred(self):
        rad = math.sqrt(math.log(math.log(200)) + 0.72 * math.log(10.4 / 0.05)) / 10
        assert float(gaussian_cs_radius(100, 0.05)) == pytest.approx(rad, rel=1e-12)
        assert rad == pytest.approx(0.2348, abs=1e-4)

    def test_interval_at_hundred(self):
        iv = gaussian_cs(_mean_window(1.2, 100), 0.95)
        assert iv.lo == pytest.approx(0.9652, abs=1e-4) and iv.hi == pytest.approx(1.4348, abs=1e-4)

    def test_radius_floor_as_beta_tends_to_one(self):
        floor = math.sqrt(math.log(math.log(2 * 50)) + 0.72 * math.log(10.4)) / math.sqrt(50)
        assert float(gaussian_cs_radius(50, 1 - 1e-12)) == pytest.approx(floor, rel=1e-9)

    def test_intersection_clips(self):
        iv = gaussian_cs(_mean_window(1.0, 100), 0.95, space=Interval(0.9, math.inf))
        assert iv.lo == 0.9

    def test_empty_window(self):
        with pytest.raises(ValueError):
            gaussian_cs([], 0.95)

    @given(st.integers(1, 10_000), st.floats(0.001, 0.5), st.floats(0.001, 0.5))
    @settings(max_examples=100, deadline=None)
    def test_nesting_in_beta(self, n, b1, b2):
        lo, hi = sorted((b1, b2))
        assert gaussian_cs_radius(n, lo) >= gaussian_cs_radius(n, hi)

    def _miss_rate(self, scale, beta=0.05, runs=2000, n=200):
        x = np.random.default_rng(0).standard_normal((runs, n))
        k = np.arange(1, n + 1)
        means = np.cumsum(x, axis=1) / k
        return np.any(np.abs(means) > gaussian_cs_radius(k, beta, scale), axis=1).mean()

    def test_time_uniform_coverage_with_stitching_constant(self):
        beta, runs = 0.05, 2000
        assert self._miss_rate(1.7) <= beta + 3 * math.sqrt(beta * (1 - beta) / runs)

    def test_unit_scale_boundary_under_covers(self):
        # the boundary without the 1.7 constant misses far more often than beta
        assert self._miss_rate(1.0) > 0.15

    def test_scale_must_be_positive(self):
        with pytest.raises(ValueError):
            gaussian_cs([1.0], 0.9, scale=0.0)


class TestGaussianCI:
    def test_example(self):
        iv = gaussian_ci(_mean_window(0.1, 4), 0.95)
        assert iv.lo == pytest.approx(-0.87998, abs=1e-5) and iv.hi == pytest.approx(1.07998, abs=1e-5)

    def test_one_sigma_level(self):
        g = 2 * stats.norm.sf(1.0)
        iv = gaussian_ci(_mean_window(0.0, 9), 1 - g)
        assert iv.hi == pytest.approx(1 / 3, abs=1e-12)

    def test_quantile_against_table(self):
        assert float(normal_quantile(0.975)) == pytest.approx(1.959963984540054, abs=1e-12)

    def test_radius_shrinks(self):
        assert gaussian_ci(np.zeros(10_000), 0.95).width < gaussian_ci(np.zeros(10), 0.95).width

    def test_fixed_n_coverage(self):
        runs = 4000
        x = np.random.default_rng(1).normal(0.3, 1, (runs, 12))
        hits = sum(0.3 in gaussian_ci(row, 0.9) for row in x)
        assert abs(hits / runs - 0.9) <= 3 * math.sqrt(0.09 / runs)


class TestIntegralIdentity:
    def test_values(self):
        assert math.exp(log_I(1.0, 1.0)) == pytest.approx(1.0, abs=1e-14)
        assert math.exp(log_I(2.0, 3.0)) == pytest.approx(0.25, abs=1e-14)

    @pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")
    @given(st.floats(0.05, 30), st.floats(0.2, 40))
    @settings(max_examples=60, deadline=None)
    def test_against_quadrature(self, a, b):
        assert math.exp(log_I(a, b)) == pytest.approx(I_quadrature(a, b), rel=1e-7)

    def test_divergent_branch(self):
        with pytest.raises(ValueError):
            log_I(1.0, 0.0)
        with pytest.raises(ValueError):
            log_I(0.0, 1.0)


class TestPoissonCS:
    def test_endpoints_solve_the_boundary(self):
        x = np.random.default_rng(2).poisson(2.0, 40)
        iv = poisson_cs(x, 0.95)
        for v in (iv.lo, iv.hi):
            assert abs(float(poisson_boundary(v, 40, x.sum(), 0.05))) < 1e-8
        mid = 0.5 * (iv.lo + iv.hi)
        assert float(poisson_boundary(mid, 40, x.sum(), 0.05)) < 0
        assert x.mean() in iv

    def test_boundary_matches_integral_form(self):
        n, total, beta, c, th = 25, 47.0, 0.05, 1.0, 1.7
        rhs = math.log(1 / beta) + log_I(c, c * th) - log_I(n + c, total + c * th)
        assert float(poisson_boundary(th, n, total, beta, c)) == pytest.approx(
            n * th - total * math.log(th) - rhs, abs=1e-10)

    def test_widens_as_beta_shrinks(self):
        x = np.random.default_rng(3).poisson(2.0, 30)
        prev = None
        for cov in (0.5, 0.95, 0.999, 1 - 1e-9):
            iv = poisson_cs(x, cov)
            if prev is not None:
                assert iv.lo <= prev.lo and iv.hi >= prev.hi
            prev = iv

    def test_zero_counts(self):
        iv = poisson_cs(np.zeros(5), 0.95)
        assert iv.lo == 0.0 and iv.hi > 0

    def test_time_uniform_coverage(self):
        beta, runs, n, rate = 0.05, 500, 200, 2.0
        x = np.random.default_rng(4).poisson(rate, (runs, n))
        k = np.arange(1, n + 1)
        totals = np.cumsum(x, axis=1)
        h = poisson_boundary(rate, k[None, :], totals, beta)
        miss = np.any(h > 0, axis=1).mean()
        assert miss <= beta + 3 * math.sqrt(beta * (1 - beta) / runs)

    def test_bad_c(self):
        with pytest.raises(ValueError):
            poisson_cs([1, 2], 0.9, c=0.0)


def _sweep_measure(parts):
    # independent route: measure of a union by sweeping sorted endpoints
    ev = sorted([(iv.lo, 1) for iv in parts] + [(iv.hi, -1) for iv in parts], key=lambda e: (e[0], -e[1]))
    depth, start, total = 0, 0.0, 0.0
    for x, d in ev:
        if depth == 0 and d == 1:
            start = x
        depth += d
        if depth == 0:
            total += x - start
    return total


class TestUnions:
    def test_two_overlapping(self):
        out = union_intervals([Interval(0.9, 1.4), Interval(1.0, 1.5)])
        assert [(iv.lo, iv.hi) for iv in out] == [(0.9, 1.5)]

    @given(st.lists(st.tuples(st.floats(-5, 5), st.floats(0, 3)), min_size=1, max_size=12))
    @settings(max_examples=150, deadline=None)
    def test_disjoint_sorted_and_measure(self, raw):
        parts = [Interval(a, a + w) for a, w in raw]
        out = union_intervals(parts)
        for a, b in zip(out, out[1:]):
            assert a.hi < b.lo
        s = ParamConfidenceSet(out, "theta1")
        assert s.measure == pytest.approx(_sweep_measure(parts), abs=1e-9)
        for a, w in raw:
            assert a in s and a + w in s

    def test_union_over_candidates(self):
        x = np.concatenate([np.zeros(10), np.ones(10)])
        curve = SurvivalCurve(np.ones(20), "plain", 1)
        single = param_set_union([12], x, 20, curve, 0.05)
        assert len(single.intervals) == 1
        iv = gaussian_cs(x[11:20], 0.95)
        assert (single.intervals[0].lo, single.intervals[0].hi) == (iv.lo, iv.hi)
        both = param_set_union([11, 12], x, 20, curve, 0.05)
        assert both.hull.lo == min(iv.lo, gaussian_cs(x[10:20], 0.95).lo)

    def test_theta0_skips_first_index(self):
        x = np.arange(10.0)
        s = param_set_union([1, 3], x, 10, None, 0.1, target="theta0")
        iv = gaussian_ci(x[:2], 0.9)
        assert [(v.lo, v.hi) for v in s.intervals] == [(iv.lo, iv.hi)]

    def test_empty_set_is_flagged(self):
        s = param_set_union([], np.zeros(5), 5, None, 0.05)
        assert s.intervals == [] and s.flags and s.hull.empty

    def test_bad_target(self):
        with pytest.raises(ValueError):
            param_set_union([1], np.zeros(5), 5, None, 0.05, target="theta2")

    def test_to_dict(self):
        s = param_set_union([3], np.zeros(5), 5, None, 0.05)
        d = s.to_dict()
        assert d["target"] == "theta1" and len(d["intervals"]) == 1
