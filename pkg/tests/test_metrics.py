import numpy as np
import pytest
from scipy import special, stats

from modcal.acceptance import random_pwl_distribution, replicated_pits, _small_point_base
from modcal.core import Gaussian, Point
from modcal.interp import PiecewiseLinearMap, fit_linear, fit_naive, fit_random
from modcal.mcc import RecalibratedDistribution
from modcal.metrics import (DEFAULT_LEVELS, MetricRow, calibration_bound_check, crps,
                            crps_closed_form, crps_quadrature, ece_debiased, ece_raw, evaluate,
                            ks_uniformity, nll, pit_histogram, sharpness)
from modcal.scores import ResidueScore, ZScore, make_score


def dist(qmap, value=0.0, rows=1, score="residue"):
    return RecalibratedDistribution(Point(np.full(rows, value)), make_score(score), qmap)


class ScaledResidue(ResidueScore):
    def __init__(self, a):
        self.a = a

    def __call__(self, pred, y):
        return self.a * super().__call__(pred, y)

    def dy(self, pred, y):
        return self.a * super().dy(pred, y)

    def inverse(self, pred, u):
        return super().inverse(pred, np.asarray(u) / self.a)

    def affine(self, pred):
        A, B = super().affine(pred)
        return A, B / self.a


class TestNll:
    def test_linear_example(self):
        assert nll(dist(fit_linear([1, 2, 3])), [1.5]) == pytest.approx(-np.log(0.25))

    def test_random_undefined(self):
        assert nll(dist(fit_random([1, 2, 3])), [1.5]) is None

    def test_zscore_std_two(self):
        q = fit_linear(np.random.default_rng(0).normal(size=50))
        one = RecalibratedDistribution(Gaussian(np.zeros(1), np.ones(1)), ZScore(), q)
        two = RecalibratedDistribution(Gaussian(np.zeros(1), np.full(1, 2.0)), ZScore(), q)
        assert nll(two, [0.6]) - nll(one, [0.3]) == pytest.approx(np.log(2), abs=1e-12)

    @pytest.mark.parametrize("a", [0.1, 3.0, 250.0])
    def test_chain_rule_invariance(self, a, rng):
        cal = rng.normal(size=40)
        y = rng.normal(size=30) * 2
        base = nll(dist(fit_linear(cal), rows=30), y)
        q = fit_linear(a * cal)
        scaled = RecalibratedDistribution(Point(np.zeros(30)), ScaledResidue(a), q)
        assert nll(scaled, y) == pytest.approx(base, abs=1e-9)


class TestCrps:
    def test_point_mass(self):
        d = dist(fit_naive([0.0]))
        assert crps(d, [0.0]) == pytest.approx(0.0, abs=1e-12)

    def test_uniform(self):
        q = PiecewiseLinearMap([0.0, 1.0], [0.0, 1.0], [0.0, 1.0], 1.0)
        assert crps(dist(q), [0.5]) == pytest.approx(1 / 12, abs=1e-9)
        assert crps(dist(q), [0.5], method="quadrature") == pytest.approx(1 / 12, abs=1e-7)

    def test_dual_path(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            d = random_pwl_distribution(rng)
            y = d.pred.value + rng.normal(size=d.size) * 2
            np.testing.assert_allclose(crps_closed_form(d, y), crps_quadrature(d, y), atol=1e-6)

    def test_gaussian_like_quadrature(self, rng):
        # zscore score on a Gaussian base is affine, so both paths apply
        q = fit_linear(rng.normal(size=200))
        g = Gaussian(rng.normal(size=4), rng.uniform(0.5, 2, 4))
        d = RecalibratedDistribution(g, ZScore(), q)
        y = rng.normal(size=4)
        np.testing.assert_allclose(crps_closed_form(d, y), crps_quadrature(d, y), atol=1e-6)

    def test_naf_uses_quadrature(self, rng):
        from modcal.interp import fit_naf
        d = dist(fit_naf(rng.normal(size=30)), rows=3)
        assert crps_closed_form(d, np.zeros(3)) is None
        assert crps(d, np.zeros(3)) > 0

    def test_closed_form_unavailable(self):
        q = fit_naive([0.0, 1.0])
        d = RecalibratedDistribution(Gaussian(np.zeros(1), np.ones(1)), make_score("cdf"), q)
        with pytest.raises(ValueError):
            crps(d, [0.0], method="closed")

    def test_nonnegative(self, rng):
        d = dist(fit_linear(rng.normal(size=20)), rows=50)
        assert np.all(crps_closed_form(d, rng.normal(size=50) * 3) >= 0)


class TestEce:
    def test_uniform_grid(self):
        m = 200
        p = (np.arange(m) + 0.5) / m
        assert ece_raw(p) <= 0.5 / m
        assert ece_debiased(p) <= 0

    def test_constant_half(self):
        levels = DEFAULT_LEVELS
        expected = np.mean(np.abs((0.5 <= levels).astype(float) - levels))
        p = np.full(500, 0.5)
        assert ece_raw(p) == pytest.approx(expected, abs=1e-15)
        assert ece_debiased(p) > 0.2

    def test_null_mean_zero(self):
        vals = np.array([ece_debiased(np.random.default_rng(1000 + k).uniform(size=300), seed=k)
                         for k in range(100)])
        se = vals.std(ddof=1) / np.sqrt(vals.size)
        assert abs(vals.mean()) <= 2 * se

    def test_seeded(self):
        p = np.random.default_rng(0).uniform(size=100)
        assert ece_debiased(p, seed=3) == ece_debiased(p, seed=3)


class TestSharpness:
    def test_marginal_predictor(self):
        rng = np.random.default_rng(3)
        y = rng.normal(size=5000)
        y = (y - y.mean()) / y.std()
        std, _ = sharpness(dist(fit_linear(y)))
        assert std == pytest.approx(1.0, abs=0.05)

    def test_normal_width(self):
        n = 10_000
        q = fit_linear(stats.norm.ppf(np.arange(1, n + 1) / (n + 1)))
        _, width = sharpness(dist(q))
        assert width == pytest.approx(2 * 1.959964, abs=0.02)

    def test_random_std_undefined(self):
        std, width = sharpness(dist(fit_random([1.0, 2.0, 3.0])))
        assert std is None and width > 0


class TestPitKs:
    def test_grid(self):
        m = 400
        assert ks_uniformity((np.arange(m) + 0.5) / m) == pytest.approx(0.5 / m)

    def test_matches_scipy(self, rng):
        p = rng.uniform(size=300) ** 1.3
        assert ks_uniformity(p) == pytest.approx(stats.kstest(p, "uniform").statistic)

    def test_oracle_shrinks(self):
        ks = [ks_uniformity(special.ndtr(np.random.default_rng(m).normal(size=m)))
              for m in (100, 10_000)]
        assert ks[1] < ks[0] and ks[1] < 0.02

    def test_constant_predictor(self, rng):
        y = rng.normal(size=1000) * 5 + 20
        pits = Gaussian(np.zeros(1000), np.ones(1000)).cdf(y)
        assert ks_uniformity(pits) > 0.99

    def test_histogram(self):
        counts = pit_histogram(np.array([0.0, 0.01, 0.5, 1.0]))
        assert counts.sum() == 4 and counts.size == 20


class TestBoundCheck:
    @pytest.mark.slow
    def test_linear_passes(self):
        m = 100_000
        pits = replicated_pits(_small_point_base(), 99, m, seed=11)
        ok, dev, bound = calibration_bound_check(pits, 0.0, 99, mc_slack=3 * np.sqrt(0.25 / m))
        assert ok, (dev, bound)

    def test_overconfident_fails(self, rng):
        y = rng.normal(size=20_000)
        pits = special.ndtr(y / 0.5)
        assert not calibration_bound_check(pits, 0.0, 99)[0]

    def test_naive_passes(self):
        n, m = 19, 100_000
        rng = np.random.default_rng(4)
        S = rng.normal(size=(m, n))
        t = rng.normal(size=m)
        pits = (S <= t[:, None]).sum(axis=1) / n
        ok, dev, bound = calibration_bound_check(pits, 1.0, n)
        assert bound == pytest.approx(0.1 + 3 * np.sqrt(0.25 / m))
        assert ok, dev


def test_evaluate_row(rng):
    d = dist(fit_linear(rng.normal(size=50)), rows=200)
    row, pits = evaluate(d, rng.normal(size=200), seed=0)
    assert isinstance(row, MetricRow) and pits.shape == (200,)
    assert row.crps >= 0 and row.ci95_width >= 0 and row.std > 0
    assert -0.05 <= row.ece


def test_evaluate_random_has_sentinels(rng):
    d = dist(fit_random(rng.normal(size=50)), rows=20)
    row, _ = evaluate(d, rng.normal(size=20))
    assert row.nll is None and row.std is None
