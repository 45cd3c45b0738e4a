import numpy as np
import pytest

from modcal.acceptance import corrected_bound_holds
from modcal.base import FunctionPredictor
from modcal.conformal import (AbsCalibrationScore, AbsResidue, Custom, EmptyIntervalError,
                              FeatureView, conformal_interval, coverage_estimate,
                              signed_score_from_nonconformity, theorem2_deviations,
                              threshold_rank)
from modcal.core import Dataset, Gaussian, Point
from modcal.scores import ZScore


def zero_phi():
    return AbsResidue(lambda X: np.zeros(np.atleast_2d(X).shape[0]))


def cal_from_scores(scores):
    s = np.asarray(scores, dtype=float)
    return Dataset(np.zeros((s.size, 1)), s, name="cal", split="cal")


X0 = np.zeros((1, 1))


class TestInterval:
    @pytest.mark.parametrize("c, half", [(2 / 3, 3.0), (1 / 3, 2.0)])
    def test_enumerated_examples(self, c, half):
        L, U = conformal_interval(zero_phi(), cal_from_scores([1, 2, 3]), X0, c)
        assert (L[0], U[0]) == (pytest.approx(-half), pytest.approx(half))

    def test_symmetric_about_minimizer(self, rng):
        phi = AbsResidue(lambda X: X[:, 0] * 2.0)
        cal = Dataset(rng.normal(size=(30, 1)), rng.normal(size=30), name="cal", split="cal")
        X = rng.normal(size=(10, 1))
        L, U = conformal_interval(phi, cal, X, 0.8)
        np.testing.assert_allclose((L + U) / 2, 2.0 * X[:, 0], atol=1e-9)

    def test_full_coverage(self):
        L, U = conformal_interval(zero_phi(), cal_from_scores([1, 2, 3]), X0, 1.0)
        assert L[0] == -np.inf and U[0] == np.inf

    def test_empty_interval_raises(self):
        # calibration rows (x = 0) score at most 3; the test row (x = 1)
        # never scores below 10, so no label reaches the threshold
        phi = Custom(lambda X, y: 10.0 * X[:, 0] + np.abs(y),
                     minimizer=lambda X: np.zeros(len(X)))
        with pytest.raises(EmptyIntervalError):
            conformal_interval(phi, cal_from_scores([1, 2, 3]), np.ones((1, 1)), 0.9)

    @pytest.mark.parametrize("c", [0.0, -0.1, 1.5])
    def test_bad_level(self, c):
        with pytest.raises(ValueError):
            conformal_interval(zero_phi(), cal_from_scores([1, 2, 3]), X0, c)

    def test_threshold_rank(self):
        assert threshold_rank(3, 2 / 3) == 3
        assert threshold_rank(99, 0.9) == 90
        assert threshold_rank(10, 1.0) == 11


class TestCoverage:
    @pytest.mark.parametrize("c", [0.5, 0.9])
    def test_single_calibration_set(self, c):
        rng = np.random.default_rng(5)
        phi = AbsResidue(lambda X: X[:, 0])
        x = rng.normal(size=2000)
        cal = Dataset(x, x + rng.normal(size=2000), name="cal", split="cal")
        xt = rng.normal(size=20_000)
        test = Dataset(xt, xt + rng.normal(size=20_000), name="test", split="test")
        assert coverage_estimate(phi, cal, test, c) == pytest.approx(c, abs=0.02)

    def test_c_one(self, rng):
        x = rng.normal(size=50)
        cal = Dataset(x, x, name="cal", split="cal")
        test = Dataset(x, x + 100 * rng.normal(size=50), name="test", split="test")
        assert coverage_estimate(zero_phi(), cal, test, 1.0) == 1.0


class TestCustom:
    def test_golden_section_minimizer(self):
        phi = Custom(lambda X, y: (y - 1.25) ** 2, bracket=(-10, 10))
        assert phi.minimizer(np.zeros((2, 1))) == pytest.approx([1.25, 1.25], abs=1e-6)

    def test_interval_from_custom(self):
        phi = Custom(lambda X, y: np.abs(y - 1.0) ** 1.5)
        L, U = conformal_interval(phi, cal_from_scores([0, 0, 0]), X0, 0.5)
        assert L[0] < 1.0 < U[0]


class TestSignedScore:
    @pytest.mark.parametrize("y, expected", [(-2.0, -2.0), (3.0, 3.0), (0.0, 0.0)])
    def test_examples(self, y, expected):
        s = signed_score_from_nonconformity(zero_phi())
        assert s(FeatureView(X0), np.array([y]))[0] == pytest.approx(expected)

    def test_monotone_across_minimizer(self, rng):
        phi = AbsResidue(lambda X: X[:, 0])
        s = signed_score_from_nonconformity(phi)
        X = rng.normal(size=(1000, 1))
        y1 = X[:, 0] + rng.normal(size=1000) * 2
        y2 = y1 + rng.exponential(size=1000) + 1e-9
        assert np.all(s(FeatureView(X), y1) < s(FeatureView(X), y2))

    def test_inverse(self, rng):
        phi = AbsResidue(lambda X: X[:, 0])
        s = signed_score_from_nonconformity(phi)
        X = rng.normal(size=(20, 1))
        y = rng.normal(size=20) * 3
        np.testing.assert_allclose(s.inverse(FeatureView(X), s(FeatureView(X), y)), y, atol=1e-8)


class TestTheorem2:
    """The credible mass of the conformal interval.

    With m = floor(c n) the mass lies in (m/(n+1), (m+1)/(n+1)], so the
    symmetric bound (1-c)/(n+1) only holds on the upper side.  The
    corrected interval is asserted here; the symmetric bound is the
    acceptance criterion and is reported there.
    """

    @pytest.mark.parametrize("n, c", [(19, 0.5), (19, 0.9), (99, 0.5), (99, 0.9), (99, 0.99)])
    def test_corrected_interval(self, n, c):
        rng = np.random.default_rng(n)
        phi = AbsResidue(lambda X: X[:, 0])
        x = rng.normal(size=n)
        cal = Dataset(x, x + rng.normal(size=n), name="cal", split="cal")
        xt = rng.normal(size=1000)
        test = Dataset(xt, xt + rng.normal(size=1000), name="test", split="test")
        dev = theorem2_deviations(phi, cal, test, c)
        assert corrected_bound_holds(dev, n, c)


def test_abs_calibration_score_centers():
    base = FunctionPredictor(lambda X: Gaussian(X[:, 0], np.ones(X.shape[0])))
    phi = AbsCalibrationScore(base, ZScore(), 0.0)
    X = np.array([[1.5]])
    assert phi.minimizer(X)[0] == pytest.approx(1.5)
    assert phi(X, np.array([3.5]))[0] == pytest.approx(2.0)


def test_abs_residue_accepts_point_output():
    phi = AbsResidue(lambda X: Point(np.full(X.shape[0], 2.0)))
    assert phi(X0, np.array([5.0]))[0] == 3.0
