import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from cploc.models import (Bernoulli, Cauchy, Contaminated, CouplingRule, DomainError, Exponential,
                          FiniteMixture, Gaussian, HuberLFD, Markov2, NamedDensity, Poisson,
                          Uniform, couple, from_dict, huber_clip_constants, log_density,
                          poisson_thin, sample_path)

CONTINUOUS = [
    Gaussian(0.3, 2.0),
    Uniform(-1.2, 0.8),
    NamedDensity("cubic_decay"),
    NamedDensity("step_mixture"),
    Cauchy(-1.0, 10.0),
    Exponential(1.5),
    FiniteMixture((0.3, 0.7), (Gaussian(-1.0), Gaussian(2.0, 0.5))),
    Contaminated(Gaussian(0.0), 0.2, Cauchy(-1.0, 10.0)),
    HuberLFD(0.0, 1.0, 0.05, "pre"),
    HuberLFD(0.0, 1.0, 0.05, "post"),
]


class TestLogDensity:
    def test_standard_normal_at_zero(self):
        assert log_density(Gaussian(0, 1), 0.0) == pytest.approx(-0.91893853, abs=1e-8)

    def test_poisson_one_at_zero(self):
        assert log_density(Poisson(1), 0) == pytest.approx(-1.0, abs=1e-12)

    def test_markov_transition_entry(self):
        assert log_density(Markov2(0.75, 0.5, 0.5), 1, prev=0) == pytest.approx(math.log(0.75))

    def test_outside_support_is_a_domain_error(self):
        with pytest.raises(DomainError):
            log_density(Poisson(2), 0.5)
        with pytest.raises(DomainError):
            log_density(Uniform(0, 1), 1.5)
        with pytest.raises(DomainError):
            log_density(Markov2(), 2)

    def test_zero_density_interior_point_is_minus_inf(self):
        assert log_density(Bernoulli(0.0), 1) == -math.inf


class TestParameterInvariants:
    @pytest.mark.parametrize("make", [
        lambda: Gaussian(0, 0), lambda: Poisson(0), lambda: Bernoulli(1.2),
        lambda: Uniform(1, 1), lambda: FiniteMixture((0.5, 0.6), (Gaussian(), Gaussian())),
        lambda: Contaminated(Gaussian(), 1.5), lambda: Markov2(1.1, 0.5, 0.5),
    ])
    def test_rejects_invalid(self, make):
        with pytest.raises(ValueError):
            make()

    @pytest.mark.parametrize("model", CONTINUOUS + [Poisson(2.5), Bernoulli(0.3), Markov2(0.75, 0.5)])
    def test_json_round_trip(self, model):
        assert from_dict(model.to_dict()) == model


class TestSamplersAgainstAnalyticLaws:
    @pytest.mark.parametrize("model", CONTINUOUS, ids=lambda m: m.kind)
    def test_ks(self, model):
        rng = np.random.default_rng(11)
        x = model.sample(rng, 100_000)
        assert stats.kstest(x, model.cdf).pvalue > 0.001

    @pytest.mark.parametrize("model", [Poisson(2.0), Poisson(0.4), Bernoulli(0.3)], ids=str)
    def test_chi_square(self, model):
        rng = np.random.default_rng(12)
        x = model.sample(rng, 100_000).astype(int)
        k = np.arange(x.max() + 1)
        obs = np.bincount(x, minlength=k.size)
        p = np.exp(model.logpdf(k.astype(float)))
        # merge the sparse tail into the last cell
        keep = p * x.size >= 5
        cut = int(np.flatnonzero(keep)[-1])
        obs = np.append(obs[:cut], obs[cut:].sum())
        p = np.append(p[:cut], 1.0 - p[:cut].sum())
        assert stats.chisquare(obs, p * x.size).pvalue > 0.001

    def test_markov_transition_frequencies(self):
        m = Markov2(0.75, 0.5, 0.5)
        x = m.sample(np.random.default_rng(3), 100_000)
        prev, nxt = x[:-1], x[1:]
        # binomial tests of the two rows of the kernel
        for state, p in ((0, 0.75), (1, 0.5)):
            sel = prev == state
            k = int(nxt[sel].sum())
            assert stats.binomtest(k, int(sel.sum()), p).pvalue > 0.001


class TestSamplePath:
    def test_change_at_one_uses_post_only(self):
        p = sample_path(Gaussian(0), Gaussian(100), 1, 50, seed=1)
        assert np.all(p.values > 50)

    def test_no_change_uses_pre_only(self):
        p = sample_path(Gaussian(0), Gaussian(100), math.inf, 50, seed=1)
        assert np.all(p.values < 50)

    def test_post_segment_mean(self):
        # P(|mean of 21 N(1,1)| - 1 > 0.7) is about 0.0014
        hits = 0
        for s in range(400):
            v = sample_path(Gaussian(0), Gaussian(1), 100, 120, seed=s).values
            hits += abs(v[99:120].mean() - 1.0) <= 0.7
        assert hits / 400 >= 0.99

    def test_bit_reproducible(self):
        a = sample_path(Gaussian(0), Gaussian(1), 30, 80, seed=9).values
        b = sample_path(Gaussian(0), Gaussian(1), 30, 80, seed=9).values
        assert a.tobytes() == b.tobytes()

    def test_markov_continues_across_change(self):
        p = sample_path(Markov2(1.0, 1.0, 1.0), Markov2(0.0, 0.0, 0.0), 5, 10, seed=0)
        # all ones before the change; the post kernel sends everything to 0
        assert p.values.tolist() == [1, 1, 1, 1, 0, 0, 0, 0, 0, 0]

    def test_horizon_must_be_positive(self):
        with pytest.raises(ValueError):
            sample_path(Gaussian(), Gaussian(1), 3, 0, seed=0)


class TestCoupling:
    def test_location(self):
        assert couple(CouplingRule("location", 0.0), 0.3, 1.0) == pytest.approx(1.3)

    def test_scale(self):
        assert couple(CouplingRule("scale", 1.0), 2.0, 3.0) == pytest.approx(6.0)

    def test_inverse_cdf_exponential(self):
        rule = CouplingRule("inverse_cdf", 1.0, model=Exponential)
        assert couple(rule, math.log(2), 2.0) == pytest.approx(math.log(2) / 2, abs=1e-12)

    def test_scale_with_zero_base_is_invalid(self):
        with pytest.raises(ValueError):
            CouplingRule("scale", 0.0)

    @pytest.mark.parametrize("theta", [-1.0, 0.25, 2.0])
    def test_location_preserves_distribution(self, theta):
        x = Gaussian(0.5).sample(np.random.default_rng(5), 100_000)
        y = couple(CouplingRule("location", 0.5), x, theta)
        assert stats.kstest(y, Gaussian(theta).cdf).pvalue > 0.001

    @pytest.mark.parametrize("theta", [0.5, 3.0])
    def test_inverse_cdf_preserves_distribution(self, theta):
        x = Exponential(1.0).sample(np.random.default_rng(6), 100_000)
        y = couple(CouplingRule("inverse_cdf", 1.0, model=Exponential), x, theta)
        assert stats.kstest(y, Exponential(theta).cdf).pvalue > 0.001


class TestPoissonThin:
    def test_direct_count(self):
        assert poisson_thin(3, [0.1, 0.5, 0.9], 0.6) == 2

    def test_zero_ratio(self):
        assert poisson_thin(3, [0.1, 0.5, 0.9], 0.0) == 0

    def test_ratio_outside_unit_interval(self):
        with pytest.raises(ValueError):
            poisson_thin(1, [0.5], 1.5)

    def test_thinned_poisson_matches_target_pmf(self):
        rng = np.random.default_rng(7)
        counts = rng.poisson(2.0, 10_000)
        out = np.array([poisson_thin(c, rng.random(c), 0.5) for c in counts])
        k = np.arange(6)
        obs = np.append(np.bincount(out, minlength=7)[:6], (out >= 6).sum())
        p = stats.poisson.pmf(k, 1.0)
        p = np.append(p, 1 - p.sum())
        assert stats.chisquare(obs, p * out.size).pvalue > 0.01


class TestHuberPair:
    @pytest.mark.parametrize("eps", [0.01, 0.1])
    def test_densities_integrate_to_one(self, eps):
        for role in ("pre", "post"):
            m = HuberLFD(0.0, 1.0, eps, role)
            val, _ = integrate.quad(lambda v: math.exp(float(m.logpdf(v))), -np.inf, np.inf)
            assert val == pytest.approx(1.0, abs=1e-8)

    @given(st.floats(-6, 7))
    @settings(max_examples=60, deadline=None)
    def test_ratio_is_the_clipped_gaussian_ratio(self, x):
        lo, hi = huber_clip_constants(0.0, 1.0, 0.01)
        q0 = float(HuberLFD(0, 1, 0.01, "pre").logpdf(x))
        q1 = float(HuberLFD(0, 1, 0.01, "post").logpdf(x))
        raw = x - 0.5
        assert q1 - q0 == pytest.approx(min(max(raw, math.log(lo)), math.log(hi)), abs=1e-9)

    def test_clip_constants_are_ordered(self):
        lo, hi = huber_clip_constants(0.0, 1.0, 0.01)
        assert 0 < lo < 1 < hi
