"""Calibration scores: functions of (prediction, label) strictly increasing in the label.

Every score exposes the value, its derivative in ``y`` (for densities), an
inverse in ``y`` (for quantiles) and, when the score is affine in ``y``, the
coefficients of that affine map (for closed-form CRPS).
"""

from __future__ import annotations

import numpy as np

from .core import (
    Ensemble,
    Gaussian,
    Interval,
    Point,
    PredictionOutput,
    Quantiles,
    VariantMismatchError,
)
from .numerics import bisect_increasing

CDF_CLAMP = 1e-12
QUANTILE_JITTER = 1e-9


def _f(a):
    return np.asarray(a, dtype=np.float64)


def _require(pred, *types):
    if not isinstance(pred, types):
        names = "/".join(t.__name__ for t in types)
        raise VariantMismatchError(
            f"score expects a {names} prediction, got {type(pred).__name__}"
        )


class CalibrationScore:
    """Base class; subclasses implement ``__call__``, ``dy`` and ``inverse``."""

    name = ""
    kinds: tuple = ()
    # score values are confined to this range (used to clamp inverses)
    lower = -np.inf
    upper = np.inf

    def check(self, pred: PredictionOutput):
        _require(pred, *self.kinds)

    def __call__(self, pred, y) -> np.ndarray:
        raise NotImplementedError

    def dy(self, pred, y) -> np.ndarray:
        raise NotImplementedError

    def inverse(self, pred, u) -> np.ndarray:
        raise NotImplementedError

    def affine(self, pred):
        """``(A, B)`` with ``y = A + B * score`` when the score is affine in y."""
        return None

    def __repr__(self):
        return f"{type(self).__name__}()"


class ResidueScore(CalibrationScore):
    name = "residue"
    kinds = (Point,)

    def __call__(self, pred, y):
        self.check(pred)
        return _f(y) - pred.value

    def dy(self, pred, y):
        return np.ones(np.broadcast(_f(y), pred.value).shape)

    def inverse(self, pred, u):
        return pred.value + _f(u)

    def affine(self, pred):
        return pred.value, np.ones_like(pred.value)


class IntervalScore(CalibrationScore):
    name = "interval"
    kinds = (Interval,)

    @staticmethod
    def _width(pred):
        w = pred.hi - pred.lo
        if np.any(w < 1e-12):
            raise ValueError("degenerate interval: hi - lo < 1e-12")
        return w

    def __call__(self, pred, y):
        self.check(pred)
        return (_f(y) - pred.lo) / self._width(pred)

    def dy(self, pred, y):
        return np.broadcast_to(1.0 / self._width(pred), np.broadcast(_f(y), pred.lo).shape).copy()

    def inverse(self, pred, u):
        return pred.lo + _f(u) * self._width(pred)

    def affine(self, pred):
        return pred.lo, self._width(pred)


class CdfScore(CalibrationScore):
    """The predicted CDF itself, clamped into ``[delta, 1 - delta]``."""

    name = "cdf"
    kinds = (Gaussian, Ensemble)
    lower = CDF_CLAMP
    upper = 1.0 - CDF_CLAMP

    def __call__(self, pred, y):
        self.check(pred)
        return np.clip(pred.cdf(_f(y)), self.lower, self.upper)

    def dy(self, pred, y):
        y = _f(y)
        p = pred.cdf(y)
        inside = (p > self.lower) & (p < self.upper)
        return np.where(inside, pred.pdf(y), 0.0)

    def inverse(self, pred, u):
        u = np.clip(_f(u), self.lower, self.upper)
        return pred.quantile(u)


def _moments(pred):
    if isinstance(pred, Gaussian):
        return pred.loc, pred.scale
    return pred.mean(), pred.std()


class ZScore(CalibrationScore):
    name = "zscore"
    kinds = (Gaussian, Ensemble)

    def _ms(self, pred):
        self.check(pred)
        m, s = _moments(pred)
        if np.any(s <= 0):
            raise ValueError("z-score needs a positive predicted std")
        return m, s

    def __call__(self, pred, y):
        m, s = self._ms(pred)
        return (_f(y) - m) / s

    def dy(self, pred, y):
        m, s = self._ms(pred)
        return np.broadcast_to(1.0 / s, np.broadcast(_f(y), m).shape).copy()

    def inverse(self, pred, u):
        m, s = self._ms(pred)
        return m + s * _f(u)

    def affine(self, pred):
        return self._ms(pred)


def resolve_quantile_ties(values):
    """Make each row strictly increasing by adding ``k * 1e-9`` to column k."""
    values = _f(values)
    if np.all(np.diff(values, axis=-1) > 0):
        return values
    k = np.arange(values.shape[-1])
    return np.maximum.accumulate(values + QUANTILE_JITTER * k, axis=-1)


class QuantileScore(CalibrationScore):
    """Piecewise-linear interpolation of the quantile levels with slope-1 tails."""

    name = "quantile"
    kinds = (Quantiles,)

    def _prep(self, pred, y):
        self.check(pred)
        v = resolve_quantile_ties(pred.values)
        y = _f(y)
        if y.ndim == 0:
            y = np.full(v.shape[0], float(y)) if v.shape[0] > 1 else y.reshape(1)
        return pred.levels, v, y

    def __call__(self, pred, y):
        a, v, yy = self._prep(pred, y)
        K = a.size
        # number of predicted quantiles strictly below y
        k = np.sum(v < yy[:, None], axis=1)
        rows = np.arange(v.shape[0])
        lo_idx = np.clip(k - 1, 0, K - 1)
        hi_idx = np.clip(k, 0, K - 1)
        f_lo, f_hi = v[rows, lo_idx], v[rows, hi_idx]
        a_lo, a_hi = a[lo_idx], a[hi_idx]
        inner = a_lo + (yy - f_lo) / np.where(hi_idx > lo_idx, f_hi - f_lo, 1.0) * (a_hi - a_lo)
        out = np.where(k == 0, a[0] + yy - v[:, 0],
                       np.where(k == K, a[-1] + yy - v[:, -1], inner))
        return out.reshape(np.shape(y)) if np.ndim(y) else out[0]

    def dy(self, pred, y):
        a, v, yy = self._prep(pred, y)
        K = a.size
        k = np.sum(v < yy[:, None], axis=1)
        rows = np.arange(v.shape[0])
        lo_idx = np.clip(k - 1, 0, K - 1)
        hi_idx = np.clip(k, 0, K - 1)
        slope = (a[hi_idx] - a[lo_idx]) / np.where(
            hi_idx > lo_idx, v[rows, hi_idx] - v[rows, lo_idx], 1.0)
        out = np.where((k == 0) | (k == K), 1.0, slope)
        return out.reshape(np.shape(y)) if np.ndim(y) else out[0]

    def inverse(self, pred, u):
        a, v, uu = self._prep(pred, u)
        K = a.size
        j = np.searchsorted(a, uu, side="left")  # a[j-1] < u <= a[j]
        rows = np.arange(v.shape[0])
        lo_idx = np.clip(j - 1, 0, K - 1)
        hi_idx = np.clip(j, 0, K - 1)
        frac = (uu - a[lo_idx]) / np.where(hi_idx > lo_idx, a[hi_idx] - a[lo_idx], 1.0)
        inner = v[rows, lo_idx] + frac * (v[rows, hi_idx] - v[rows, lo_idx])
        out = np.where(uu <= a[0], v[:, 0] + uu - a[0],
                       np.where(uu > a[-1], v[:, -1] + uu - a[-1], inner))
        return out.reshape(np.shape(u)) if np.ndim(u) else out[0]


class EnsembleSumScore(CalibrationScore):
    """Weighted sum of per-member scores."""

    name = "ensemble-sum"
    kinds = (Ensemble,)

    def __init__(self, member_scores=None, member_weights=None):
        self.member_scores = None if member_scores is None else list(member_scores)
        self.member_weights = None if member_weights is None else _f(member_weights)
        if self.member_weights is not None and np.any(self.member_weights <= 0):
            raise ValueError("ensemble score weights must be positive")

    def _parts(self, pred):
        self.check(pred)
        K = len(pred.members)
        scores = self.member_scores or [default_score_for(m) for m in pred.members]
        if len(scores) != K:
            raise ValueError("one member score per ensemble member required")
        w = np.ones(K) if self.member_weights is None else self.member_weights
        if w.shape != (K,):
            raise ValueError("one weight per ensemble member required")
        return scores, w

    def __call__(self, pred, y):
        scores, w = self._parts(pred)
        return sum(wk * s(m, y) for wk, s, m in zip(w, scores, pred.members))

    def dy(self, pred, y):
        scores, w = self._parts(pred)
        return sum(wk * s.dy(m, y) for wk, s, m in zip(w, scores, pred.members))

    def affine(self, pred):
        scores, w = self._parts(pred)
        coefs = [s.affine(m) for s, m in zip(scores, pred.members)]
        if any(c is None for c in coefs):
            return None
        # u = sum_k w_k (y - A_k) / B_k
        slope = sum(wk / B for wk, (A, B) in zip(w, coefs))
        offset = sum(wk * A / B for wk, (A, B) in zip(w, coefs))
        return offset / slope, 1.0 / slope

    def inverse(self, pred, u):
        aff = self.affine(pred)
        if aff is not None:
            return aff[0] + aff[1] * _f(u)
        scores, w = self._parts(pred)
        u = _f(u)
        centers = [s.inverse(m, u / w.sum()) for s, m in zip(scores, pred.members)]
        lo = np.minimum.reduce(centers) - 1.0
        hi = np.maximum.reduce(centers) + 1.0
        return bisect_increasing(lambda y: self(pred, y), u, lo, hi)


def residue_score(pred, y):
    return ResidueScore()(pred, y)


def interval_score(pred, y):
    return IntervalScore()(pred, y)


def cdf_score(pred, y):
    return CdfScore()(pred, y)


def zscore_score(pred, y):
    return ZScore()(pred, y)


def quantile_score(pred, y):
    return QuantileScore()(pred, y)


def ensemble_score(members, weights, y):
    """``members`` is a sequence of ``(score, prediction)`` pairs."""
    members = list(members)
    if not members:
        raise ValueError("empty ensemble")
    w = _f(weights)
    if np.any(w <= 0):
        raise ValueError("ensemble weights must be positive")
    return sum(wk * s(p, y) for wk, (s, p) in zip(w, members))


SCORES = {
    "residue": ResidueScore,
    "interval": IntervalScore,
    "cdf": CdfScore,
    "zscore": ZScore,
    "quantile": QuantileScore,
    "ensemble-sum": EnsembleSumScore,
}

# which base kinds (see ``base.parse_kind``) each score accepts
COMPATIBLE = {
    "residue": {"point"},
    "interval": {"interval"},
    "quantile": {"quantile"},
    "cdf": {"distribution", "ensemble"},
    "zscore": {"distribution", "ensemble"},
    "ensemble-sum": {"ensemble"},
}

DEFAULT_FOR_KIND = {
    "point": "residue",
    "interval": "interval",
    "quantile": "quantile",
    "distribution": "zscore",
    "ensemble": "zscore",
}


def make_score(name: str) -> CalibrationScore:
    try:
        return SCORES[name]()
    except KeyError:
        raise ValueError(
            f"unknown score {name!r}; choose from {', '.join(SCORES)}"
        ) from None


def default_score_for(pred: PredictionOutput) -> CalibrationScore:
    if isinstance(pred, Point):
        return ResidueScore()
    if isinstance(pred, Interval):
        return IntervalScore()
    if isinstance(pred, Quantiles):
        return QuantileScore()
    if isinstance(pred, (Gaussian, Ensemble)):
        return ZScore()
    raise VariantMismatchError(f"no default score for {type(pred).__name__}")
