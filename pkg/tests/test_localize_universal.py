import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize, stats

from cploc.confseq import Interval
from cploc.detectors import cusum_lr, stop_times
from cploc.eprocesses import EProcessSpec, forward_all
from cploc.localize_universal import (CalibrationError, ConfidenceSetT, DetectorCriterion,
                                      EProcessCriterion, KnownPairCriterion, ProfileCriterion,
                                      TwoMeanCriterion, known_pair_recipe, log_thresholds,
                                      point_estimate, test_statistic as stat_at,
                                      test_statistics as stats_all, universal_set)
from cploc.models import Gaussian
from cploc.survival import SurvivalCurve, estimate_survival, unit_curve

G0, G1 = Gaussian(0.0), Gaussian(1.0)
EXAMPLE = np.array([-0.1, 0.05, 2.0, 1.8])


def _recipe():
    return known_pair_recipe(G0, G1)


class TestPointEstimate:
    def test_example_scores(self):
        est = point_estimate(KnownPairCriterion(G0, G1), EXAMPLE, 4)
        # suffix sums of x - 1/2 written out by hand
        brute = [sum(EXAMPLE[j:] - 0.5) for j in range(4)]
        np.testing.assert_allclose(est.criterion, brute, atol=1e-12)
        np.testing.assert_allclose(est.criterion, [1.75, 2.35, 2.80, 1.30], atol=1e-12)
        assert est.t_hat == 3

    def test_far_post_change_data(self):
        assert point_estimate(KnownPairCriterion(G0, G1), np.full(6, 10.0), 6).t_hat == 1

    def test_tie_goes_to_smaller_index(self):
        # scores are 1.5 for both starts
        assert point_estimate(KnownPairCriterion(G0, G1), [0.5, 2.0], 2).t_hat == 1

    def test_tau_checks(self):
        with pytest.raises(ValueError):
            point_estimate(KnownPairCriterion(G0, G1), EXAMPLE, 0)
        with pytest.raises(ValueError):
            point_estimate(KnownPairCriterion(G0, G1), EXAMPLE, 5)

    @given(st.integers(0, 10_000), st.integers(1, 40))
    @settings(max_examples=60, deadline=None)
    def test_estimate_attains_maximum(self, seed, tau):
        x = np.random.default_rng(seed).normal(0.5, 1, 40)
        est = point_estimate(KnownPairCriterion(G0, G1), x, tau)
        c = est.criterion
        assert c[est.t_hat - 1] == c.max()
        assert np.all(c[:est.t_hat - 1] < c.max())


class TestOtherCriteria:
    def _brute_profile(self, x, j, theta0, lo=-np.inf, hi=np.inf):
        seg = x[j:]
        ll = lambda th: -np.sum(stats.norm.logpdf(seg, th) - stats.norm.logpdf(seg, theta0))  # noqa: E731
        b = (max(lo, -20), min(hi, 20))
        return -optimize.minimize_scalar(ll, bounds=b, method="bounded",
                                         options={"xatol": 1e-10}).fun

    def test_profile_gaussian(self):
        x = np.random.default_rng(3).normal(0.4, 1, 25)
        got = ProfileCriterion(0.0).scores(x, 25)
        want = [self._brute_profile(x, j, 0.0) for j in range(25)]
        np.testing.assert_allclose(got, want, atol=1e-7)

    def test_profile_restricted_space(self):
        x = np.random.default_rng(4).normal(0.2, 1, 25)
        got = ProfileCriterion(0.0, space=Interval(0.75, np.inf)).scores(x, 25)
        want = [self._brute_profile(x, j, 0.0, lo=0.75) for j in range(25)]
        np.testing.assert_allclose(got, want, atol=1e-7)

    def test_profile_poisson(self):
        x = np.random.default_rng(5).poisson(2.0, 20).astype(float)
        got = ProfileCriterion(1.0, "poisson").scores(x, 20)
        for j in range(20):
            seg = x[j:]
            th = seg.mean()
            want = np.sum(stats.poisson.logpmf(seg, th) - stats.poisson.logpmf(seg, 1.0))
            assert got[j] == pytest.approx(want, abs=1e-9)

    def test_two_mean_argmax_matches_full_likelihood(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            x = np.concatenate([rng.normal(0.3, 1, 15), rng.normal(1.6, 1, 10)])
            got = TwoMeanCriterion().scores(x, 25)
            full = []
            for j in range(25):
                a, b = x[:j], x[j:]
                v = np.sum(stats.norm.logpdf(b, b.mean()))
                if j:
                    v += np.sum(stats.norm.logpdf(a, a.mean()))
                full.append(v)
            # equal up to a term common to every start
            np.testing.assert_allclose(np.diff(got), np.diff(full), atol=1e-9)

    def test_histogram_kernel_matches_forward_all(self):
        x = np.random.default_rng(7).random(30)
        spec = EProcessSpec("forward", "histogram_plugin", bins=10)
        np.testing.assert_allclose(EProcessCriterion(spec).scores(x, 30), forward_all(spec, x, 30),
                                   atol=1e-10)

    def test_detector_criterion_is_the_known_pair_sum(self):
        x = np.random.default_rng(8).normal(0.5, 1, 20)
        a = DetectorCriterion(cusum_lr(G0, G1, 100)).scores(x, 20)
        b = KnownPairCriterion(G0, G1).scores(x, 20)
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_unsupported_family(self):
        with pytest.raises(ValueError):
            ProfileCriterion(0.0, "cauchy").scores(EXAMPLE, 4)


class TestStatistic:
    def test_at_estimate_is_zero(self):
        r = _recipe()
        est = point_estimate(r.criterion, EXAMPLE, 4)
        assert stat_at(3, est, r.forward, r.backward, EXAMPLE, 4) == 0.0

    def test_hand_values(self):
        r = _recipe()
        est = point_estimate(r.criterion, EXAMPLE, 4)
        # t = 2 and 1: -sum of (x_i - 1/2) over t..2; t = 4: x_3 - 1/2
        assert stat_at(2, est, r.forward, r.backward, EXAMPLE, 4) == pytest.approx(0.45)
        assert stat_at(1, est, r.forward, r.backward, EXAMPLE, 4) == pytest.approx(1.05)
        assert stat_at(4, est, r.forward, r.backward, EXAMPLE, 4) == pytest.approx(1.5)
        np.testing.assert_allclose(stats_all(est, r.forward, r.backward, EXAMPLE, 4),
                                   [1.05, 0.45, 0.0, 1.5], atol=1e-12)

    def test_beyond_tau_and_no_stop(self):
        r = _recipe()
        est = point_estimate(r.criterion, EXAMPLE, 4)
        assert stat_at(5, est, r.forward, r.backward, EXAMPLE, 4) == -math.inf
        assert stat_at(2, est, r.forward, r.backward, EXAMPLE, math.inf) == -math.inf

    def test_t_must_be_positive(self):
        r = _recipe()
        est = point_estimate(r.criterion, EXAMPLE, 4)
        with pytest.raises(ValueError):
            stat_at(0, est, r.forward, r.backward, EXAMPLE, 4)


class TestUniversalSet:
    def test_full_set_at_unit_survival(self):
        cs = universal_set(EXAMPLE, 4, 0.05, None, _recipe(), mode="pfa")
        np.testing.assert_allclose(cs.thresholds, math.log(40.0))
        assert cs.members.tolist() == [1, 2, 3, 4]

    def test_threshold_arithmetic(self):
        thr = log_thresholds(0.5, SurvivalCurve(np.array([1.0, 0.25]), "plain", 4), 2)
        np.testing.assert_allclose(thr, [math.log(4.0), math.log(16.0)])

    def test_zero_survival_is_a_calibration_error(self):
        curve = SurvivalCurve(np.array([1.0, 0.5, 0.0, 0.0]), "plain", 2)
        with pytest.raises(CalibrationError, match="asymptotic or negative binomial"):
            universal_set(EXAMPLE, 4, 0.05, curve, _recipe())

    def test_strict_inequality(self):
        # pick alpha so that log 2 - log alpha equals log M_1 bit for bit
        m1 = universal_set(EXAMPLE, 4, 0.05, None, _recipe(), mode="pfa").stats[0]
        alpha = 2.0 / math.exp(m1)
        for _ in range(200):
            thr = math.log(2.0) - math.log(alpha)
            if thr == m1:
                break
            alpha = float(np.nextafter(alpha, 0.0 if thr < m1 else 1.0))
        assert math.log(2.0) - math.log(alpha) == m1
        cs = universal_set(EXAMPLE, 4, alpha, None, _recipe(), mode="pfa")
        assert 1 not in cs and 2 in cs

    def test_mode_checks(self):
        with pytest.raises(ValueError):
            universal_set(EXAMPLE, 4, 0.05, None, _recipe(), mode="known_pre")
        with pytest.raises(ValueError):
            universal_set(EXAMPLE, 4, 0.05, None, _recipe(), mode="other")
        with pytest.raises(ValueError):
            universal_set(EXAMPLE, 4, 1.5, None, _recipe(), mode="pfa")

    @given(st.integers(0, 10_000), st.integers(1, 30), st.floats(0.01, 0.5))
    @settings(max_examples=60, deadline=None)
    def test_estimate_always_included_and_members_in_range(self, seed, tau, alpha):
        x = np.random.default_rng(seed).normal(0.5, 1.5, 30)
        cs = universal_set(x, tau, alpha, unit_curve(tau), _recipe())
        assert cs.t_hat in cs
        assert cs.members.min() >= 1 and cs.members.max() <= tau
        assert np.all(np.diff(cs.members) > 0)

    def test_members_outside_range_rejected(self):
        with pytest.raises(AssertionError):
            ConfidenceSetT(np.array([0, 2]), 3, 0.05, 2, "x")

    def test_serialization(self):
        cs = universal_set(EXAMPLE, 4, 0.05, None, _recipe(), mode="pfa")
        d = json.loads(cs.to_json())
        assert d["members"] == [1, 2, 3, 4] and d["t_hat"] == 3 and d["tau"] == 4
        assert len(d["thresholds"]) == 4
        assert cs.to_csv().splitlines() == [ConfidenceSetT.CSV_HEADER,
                                            "universal_pfa,4,0.05,3,4,1 2 3 4"]


def _streams(rng, reps, horizon, change):
    X = rng.standard_normal((reps, horizon))
    X[:, change - 1:] += 1.0
    return X


class TestLevel:
    def test_level_at_change_time(self):
        # P(M_t >= 2/alpha) <= alpha on streams with tau >= t, t = T = 25
        t, alpha, want = 25, 0.05, 2000
        spec = cusum_lr(G0, G1, 1000)
        r = _recipe()
        rng = np.random.default_rng(2024)
        hits = n = 0
        while n < want:
            X = _streams(rng, 1000, 300, t)
            taus = stop_times(spec, X)
            for row, tau in zip(X, taus):
                if tau < t or n >= want:
                    continue
                est = point_estimate(r.criterion, row, int(tau))
                hits += stat_at(t, est, r.forward, r.backward, row, int(tau)) >= math.log(2 / alpha)
                n += 1
        assert hits / want <= alpha + 2 * math.sqrt(alpha * (1 - alpha) / want)

    def test_rejection_rate_tracks_survival(self):
        # inverted test at t = 40 rejects with probability <= alpha P(tau >= t)
        t, alpha, reps, A = 40, 0.05, 2000, 100.0
        spec = cusum_lr(G0, G1, A)
        curve = estimate_survival(G0, spec, t, N=2000, seed=11)
        thr = math.log(2.0 / (alpha * curve.r(t)))
        r = _recipe()
        X = _streams(np.random.default_rng(12), reps, 600, t)
        taus = stop_times(spec, X)
        rej = 0
        for row, tau in zip(X, taus):
            if tau >= t:
                est = point_estimate(r.criterion, row, int(tau))
                rej += stat_at(t, est, r.forward, r.backward, row, int(tau)) >= thr
        rate = rej / reps
        p_hat = curve.r(t)
        se = math.sqrt(max(rate * (1 - rate), 1e-4) / reps)
        assert rate <= alpha * p_hat + 3 * se
