import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cploc.detectors import (DetectorSpec, UnsupportedDetector, UsageError, cusum_from_increments,
                             cusum_lr, default_weights, detector_step, huber_cusum, initial_state,
                             mixture_lr_pfa, run_to_stop, scalar_increments, stop_time,
                             stop_time_bounds, stop_times, weighted_cusum, wu_reflected)
from cploc.models import Gaussian, Markov2, Poisson


def _stream_stop(spec, x):
    out = run_to_stop(spec, x)
    return out.tau if out.stopped else 0


def _all_families():
    g0, g1 = Gaussian(0.0), Gaussian(1.0)
    return [
        ("cusum_lr", cusum_lr(g0, g1, 50.0), "gauss"),
        ("sr", DetectorSpec("sr", 50.0, pre=g0, post=g1), "gauss"),
        ("lr_pfa", DetectorSpec("lr_pfa", 50.0, pre=g0, post=g1), "gauss"),
        ("weighted_cusum", weighted_cusum(0.75, 0.0, 50.0), "gauss"),
        ("wcs_ripr", weighted_cusum(0.9, 0.5, 50.0, ripr=True), "gauss"),
        ("mixture_lr_pfa", mixture_lr_pfa(0.75, 0.0, 50.0), "gauss"),
        ("mixture_lr_ripr_pfa", mixture_lr_pfa(0.9, 0.5, 50.0, ripr=True), "gauss"),
        ("poisson_wcusum", weighted_cusum(1.9, 1.0, 50.0, param="poisson"), "pois"),
        ("e_hist", DetectorSpec("e_hist", 50.0, bins=10), "unit"),
        ("e_subgaussian", DetectorSpec("e_subgaussian", 50.0, boundary=0.5), "gauss"),
        ("huber_cusum", huber_cusum(0.0, 1.0, (0.5, 2.0), 50.0), "gauss"),
        ("markov_cusum", DetectorSpec("markov_cusum", 50.0, pre=Markov2(0.75, 0.5, 0.5),
                                      post=Markov2(0.25, 0.5, 0.5)), "binary"),
        ("wu_reflected", wu_reflected(8.59), "gauss"),
    ]


def _draw(kind, rng, n):
    # streams with a shift half way so that most detectors stop
    if kind == "gauss":
        return np.concatenate([rng.normal(-0.2, 1, n // 2), rng.normal(1.2, 1, n - n // 2)])
    if kind == "pois":
        return np.concatenate([rng.poisson(1.0, n // 2), rng.poisson(3.0, n - n // 2)]).astype(float)
    if kind == "unit":
        return np.concatenate([rng.random(n // 2), rng.random(n - n // 2) ** 3])
    return np.concatenate([Markov2(0.75, 0.5, 0.5).sample(rng, n // 2),
                           Markov2(0.25, 0.5, 0.5).sample(rng, n - n // 2)])


class TestSingleSteps:
    def test_cusum_unit_ratio_leaves_statistic(self):
        spec = cusum_lr(Gaussian(0), Gaussian(1), 1000)
        s = detector_step(spec, initial_state(spec), 0.5)
        assert s.statistic == pytest.approx(1.0)
        s = detector_step(spec, s, 0.5)
        assert s.statistic == pytest.approx(1.0)

    def test_reflected_one_step(self):
        spec = wu_reflected(8.59)
        s = detector_step(spec, initial_state(spec), 10.0)
        assert s.log_stat == 10.0 and s.stopped

    def test_huber_clips_large_ratio(self):
        spec = huber_cusum(0.0, 1.0, (0.5, 2.0), 1000)
        s = detector_step(spec, initial_state(spec), 0.5 + math.log(5.0))
        assert s.statistic == pytest.approx(2.0)

    def test_step_after_stop_is_rejected(self):
        spec = wu_reflected(1.0)
        s = detector_step(spec, initial_state(spec), 5.0)
        with pytest.raises(UsageError):
            detector_step(spec, s, 0.0)

    def test_subgaussian_empty_history_uses_zero_mean(self):
        spec = DetectorSpec("e_subgaussian", 100.0, boundary=0.5)
        x = 0.1
        nu = -0.5
        s = detector_step(spec, initial_state(spec), x)
        assert s.log_stat == pytest.approx(nu * (x - 0.5) - nu**2 / 2)

    def test_histogram_first_factor_is_one(self):
        spec = DetectorSpec("e_hist", 100.0, bins=10)
        s = detector_step(spec, initial_state(spec), 0.33)
        assert s.log_stat == pytest.approx(0.0)


class TestRunToStop:
    def test_constant_ratio_e_stops_at_seven(self):
        # Gaussian 0 -> 1 has log LR = x - 0.5, so x = 1.5 gives LR = e
        spec = cusum_lr(Gaussian(0), Gaussian(1), 1000)
        assert run_to_stop(spec, [1.5] * 20).tau == 7
        assert math.exp(6) < 1000 <= math.exp(7)

    def test_unit_ratio_is_censored(self):
        spec = cusum_lr(Gaussian(0), Gaussian(1), 1000)
        out = run_to_stop(spec, iter(lambda: 0.5, None), cap=50)
        assert not out.stopped and out.cap == 50
        assert repr(out) == "censored(50)"


class TestBatchMatchesStreaming:
    @pytest.mark.parametrize("name,spec,kind", _all_families(), ids=[f[0] for f in _all_families()])
    def test_stop_times_agree(self, name, spec, kind):
        rng = np.random.default_rng(21)
        for _ in range(15):
            x = _draw(kind, rng, 80)
            assert stop_time(spec, x) == _stream_stop(spec, x)

    @pytest.mark.parametrize("name,spec,kind", _all_families(), ids=[f[0] for f in _all_families()])
    def test_statistic_is_nonnegative(self, name, spec, kind):
        x = _draw(kind, np.random.default_rng(2), 30)
        s = initial_state(spec)
        for v in x:
            if s.stopped:
                break
            s = detector_step(spec, s, v)
            assert s.statistic >= 0.0


class TestDefinitionalForms:
    def test_cusum_recursion_equals_max_over_starts(self):
        rng = np.random.default_rng(4)
        spec = cusum_lr(Gaussian(0), Gaussian(1), 1e9)
        for _ in range(200):
            x = rng.normal(0.3, 1, 50)
            inc = scalar_increments(spec, x)
            rec = cusum_from_increments(inc)
            brute = np.array([max(inc[j:n + 1].sum() for j in range(n + 1)) for n in range(50)])
            np.testing.assert_allclose(np.exp(rec), np.exp(brute), rtol=1e-10)

    def test_weighted_mixture_equals_sum_of_atom_products(self):
        rng = np.random.default_rng(8)
        spec = weighted_cusum(0.75, 0.0, 1e12)
        th = np.asarray(spec.atoms)
        w = np.asarray(spec.masses)
        for _ in range(20):
            x = rng.normal(0.5, 1, 20)
            s = initial_state(spec)
            for n in range(20):
                s = detector_step(spec, s, x[n])
                seg = [x[j:n + 1] for j in range(n + 1)]
                brute = max(math.log(sum(wm * math.exp(np.sum(tm * v - tm**2 / 2)) for wm, tm in zip(w, th)))
                            for v in seg)
                assert s.log_stat == pytest.approx(brute, rel=1e-10, abs=1e-12)

    def test_poisson_atoms_use_poisson_ratio(self):
        spec = weighted_cusum(1.9, 1.0, 1e9, param="poisson")
        a, b, _ = spec.atom_coefficients()
        x = 3.0
        direct = Poisson(1.9).logpdf(x) - Poisson(1.0).logpdf(x)
        assert a[0] * x + b[0] == pytest.approx(float(direct))

    @given(st.integers(1, 40))
    def test_default_weights_sum_to_one(self, n):
        w = default_weights(n)
        assert np.all(w >= 0) and abs(w.sum() - 1) < 1e-12

    def test_weights_must_sum_to_one(self):
        with pytest.raises(ValueError):
            DetectorSpec("weighted_cusum", 10.0, atoms=(1.0, 2.0), masses=(0.5, 0.6))

    def test_huber_clip_order_enforced(self):
        with pytest.raises(ValueError):
            huber_cusum(0.0, 1.0, (2.0, 0.5), 10.0)

    def test_spec_json_round_trip(self):
        for _, spec, _ in _all_families():
            assert DetectorSpec.from_dict(spec.to_dict()) == spec


class TestMonotoneInThreshold:
    @given(st.integers(0, 10_000), st.floats(1.5, 100), st.floats(1.0, 50))
    @settings(max_examples=60, deadline=None)
    def test_larger_threshold_never_stops_earlier(self, seed, A, factor):
        x = np.random.default_rng(seed).normal(0.4, 1, 300)
        for make in (lambda a: cusum_lr(Gaussian(0), Gaussian(1), a),
                     lambda a: weighted_cusum(0.75, 0.0, a)):
            lo = stop_time(make(A), x) or math.inf
            hi = stop_time(make(A * factor), x) or math.inf
            assert lo <= hi


class TestBrackets:
    def test_singleton_bracket(self):
        spec = weighted_cusum(0.75, 0.0, 1000)
        eps = np.random.default_rng(0).standard_normal(400)
        b = stop_time_bounds(spec, eps, 20, 1.0, 1.0)
        assert b.t1 == b.t2

    def test_fast_corner_is_the_upper_parameter(self):
        spec = weighted_cusum(0.75, 0.0, 1000)
        eps = np.random.default_rng(1).standard_normal(400)
        t = 30
        b = stop_time_bounds(spec, eps, t, 0.8, 1.6)
        path = lambda th: np.where(np.arange(1, 401) < t, eps, eps + th)  # noqa: E731
        assert b.t1 == stop_time(spec, path(1.6))
        assert b.t2 == stop_time(spec, path(0.8))

    def test_random_parameters_fall_inside_bracket(self):
        spec = weighted_cusum(0.75, 0.0, 1000)
        rng = np.random.default_rng(2)
        violations = 0
        for _ in range(10):
            eps = rng.standard_normal(600)
            t = int(rng.integers(1, 80))
            lo, hi = sorted(rng.uniform(0.75, 2.5, 2))
            b = stop_time_bounds(spec, eps, t, lo, hi)
            cols = np.arange(1, 601)
            for th in rng.uniform(lo, hi, 50):
                tau = stop_time(spec, np.where(cols < t, eps, eps + th)) or math.inf
                violations += not (b.t1 <= tau <= b.t2)
        assert violations == 0

    def test_unsupported_detector(self):
        with pytest.raises(UnsupportedDetector):
            stop_time_bounds(cusum_lr(Gaussian(0), Gaussian(1), 10), np.zeros(5), 1, 0.5, 1.0)


def test_batch_rows_are_independent():
    spec = weighted_cusum(0.75, 0.0, 100)
    X = np.random.default_rng(3).normal(0.5, 1, (6, 200))
    together = stop_times(spec, X)
    alone = [stop_time(spec, row) for row in X]
    assert together.tolist() == alone
