"""Conformal interval prediction and its link to recalibrated credible intervals."""

from __future__ import annotations

import math

import numpy as np

from .core import Dataset, PredictionOutput
from .numerics import bisect_increasing, golden_section_min
from .scores import CalibrationScore


class EmptyIntervalError(ValueError):
    pass


class NonconformityScore:
    """Continuous, strictly unimodal-in-y score ``phi(x, y)``.

    Subclasses give ``__call__(X, y)`` and ``minimizer(X)``, both vectorized
    over the rows of ``X``.
    """

    def __call__(self, X, y) -> np.ndarray:
        raise NotImplementedError

    def minimizer(self, X) -> np.ndarray:
        raise NotImplementedError

    def dy(self, X, y):
        h = 1e-6 * np.maximum(1.0, np.abs(y))
        return (self(X, y + h) - self(X, y - h)) / (2 * h)


class AbsResidue(NonconformityScore):
    """``|y - f(x)|`` for a point predictor ``f``."""

    def __init__(self, predict):
        self.predict = predict

    def _f(self, X):
        out = self.predict(X)
        if isinstance(out, PredictionOutput):
            out = out.value
        return np.asarray(out, dtype=np.float64).reshape(-1)

    def __call__(self, X, y):
        return np.abs(np.asarray(y, dtype=np.float64) - self._f(X))

    def minimizer(self, X):
        return self._f(X)

    def dy(self, X, y):
        return np.sign(np.asarray(y, dtype=np.float64) - self._f(X))


class AbsCalibrationScore(NonconformityScore):
    """``|phi(f(x), y) - center|`` built from a calibration score.

    For a point base with the residue score and ``center = 0`` this is
    :class:`AbsResidue`; for interval, quantile or CDF scores the natural
    center is 0.5.
    """

    def __init__(self, base, score: CalibrationScore, center: float = 0.0):
        self.base = base
        self.score = score
        self.center = float(center)

    def __call__(self, X, y):
        return np.abs(self.score(self.base.predict(X), y) - self.center)

    def minimizer(self, X):
        pred = self.base.predict(X)
        return np.asarray(self.score.inverse(pred, np.full(pred.size, self.center)),
                          dtype=np.float64)

    def dy(self, X, y):
        pred = self.base.predict(X)
        return np.sign(self.score(pred, y) - self.center) * self.score.dy(pred, y)


class Custom(NonconformityScore):
    """User-supplied score; the minimizer is found by golden-section search
    over ``bracket`` when not given."""

    def __init__(self, fn, minimizer=None, bracket=(-10.0, 10.0), tol=1e-9):
        self.fn = fn
        self._minimizer = minimizer
        self.bracket = bracket
        self.tol = tol

    def __call__(self, X, y):
        return np.asarray(self.fn(X, y), dtype=np.float64)

    def minimizer(self, X):
        if self._minimizer is not None:
            return np.asarray(self._minimizer(X), dtype=np.float64)
        rows = np.atleast_2d(X).shape[0]
        lo = np.full(rows, self.bracket[0], dtype=np.float64)
        hi = np.full(rows, self.bracket[1], dtype=np.float64)
        return golden_section_min(lambda y: self(X, y), lo, hi, tol=self.tol)


def threshold_rank(n: int, c: float) -> int:
    """1-based rank of the calibration score bounding the conformal set.

    ``count(phi_i <= phi(x, y)) <= c n`` holds exactly while ``phi(x, y)``
    stays below the ``floor(c n) + 1``-th smallest calibration score.
    """
    return math.floor(c * n + 1e-9) + 1


def _endpoints(phi, X, T):
    """Solve ``phi(x, y) = T`` on both sides of the minimizer."""
    y0 = phi.minimizer(X)
    rows = y0.size
    T = np.broadcast_to(T, (rows,))
    if np.any(phi(X, y0) > T):
        raise EmptyIntervalError("threshold lies below the minimum non-conformity")
    width = np.maximum(1.0, np.abs(y0)) * 1e-2 + 1.0
    L = bisect_increasing(lambda y: -phi(X, y), -T, y0 - width, y0)
    U = bisect_increasing(lambda y: phi(X, y), T, y0, y0 + width)
    return L, U


def conformal_interval(phi: NonconformityScore, cal: Dataset, X, c: float):
    """Endpoints of ``{y : #{i : phi_i <= phi(x, y)} <= c n}`` for each row of X."""
    if len(cal) == 0:
        raise ValueError("calibration set is empty")
    if not 0 < c <= 1:
        raise ValueError("coverage level must lie in (0, 1]")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    S = np.sort(phi(cal.features, cal.labels))
    k = threshold_rank(S.size, c)
    rows = X.shape[0]
    if k > S.size:
        return np.full(rows, -np.inf), np.full(rows, np.inf)
    return _endpoints(phi, X, S[k - 1])


def coverage_estimate(phi: NonconformityScore, cal: Dataset, test: Dataset, c: float) -> float:
    L, U = conformal_interval(phi, cal, test.features, c)
    y = test.labels
    return float(np.mean((y >= L) & (y <= U)))


class FeatureView(PredictionOutput):
    """Prediction that simply carries the features, for scores of ``(x, y)``."""

    kind = "features"

    def __init__(self, X):
        self.X = np.atleast_2d(np.asarray(X, dtype=np.float64))

    @property
    def size(self):
        return self.X.shape[0]

    def take(self, idx):
        return FeatureView(self.X[idx])


class FeaturePassthrough:
    """Base predictor whose output is its input; pairs with :class:`SignedScore`."""

    kind = "features"

    def predict(self, X):
        return FeatureView(X)


class SignedScore(CalibrationScore):
    """``sign(y - y_min(x)) * (phi(x, y) - phi(x, y_min(x)))``: a strictly
    increasing calibration score whose magnitude is the shifted
    non-conformity."""

    name = "signed"
    kinds = (FeatureView,)

    def __init__(self, phi: NonconformityScore):
        self.phi = phi
        self.base = FeaturePassthrough()

    def _floor(self, X):
        y0 = self.phi.minimizer(X)
        return y0, self.phi(X, y0)

    def __call__(self, pred, y):
        self.check(pred)
        y = np.asarray(y, dtype=np.float64)
        y0, m = self._floor(pred.X)
        return np.where(y >= y0, 1.0, -1.0) * (self.phi(pred.X, y) - m)

    def dy(self, pred, y):
        y = np.asarray(y, dtype=np.float64)
        y0, _ = self._floor(pred.X)
        return np.where(y >= y0, 1.0, -1.0) * self.phi.dy(pred.X, y)

    def inverse(self, pred, u):
        u = np.asarray(u, dtype=np.float64)
        y0, m = self._floor(pred.X)
        L, U = _endpoints(self.phi, pred.X, m + np.abs(u))
        return np.where(u >= 0, U, L)


def signed_score_from_nonconformity(phi: NonconformityScore) -> SignedScore:
    return SignedScore(phi)


def theorem2_deviations(phi: NonconformityScore, cal: Dataset, test: Dataset, c: float):
    """``H[x](U) - H[x](L) - c`` for every test row, with H the linear
    recalibration of the signed score and (L, U) the conformal interval."""
    from .mcc import recalibrate

    score = signed_score_from_nonconformity(phi)
    H = recalibrate(score.base, score, "linear", cal)
    L, U = conformal_interval(phi, cal, test.features, c)
    dist = H.distribution(test.features)
    return dist.cdf(U) - dist.cdf(L) - c


def theorem2_check(phi: NonconformityScore, cal: Dataset, test: Dataset, c: float) -> float:
    return float(np.max(np.abs(theorem2_deviations(phi, cal, test, c))))
