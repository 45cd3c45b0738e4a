"""Recalibrated distribution predictors ``H[x](y) = q(phi(f(x), y))``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Dataset, PredictionOutput
from .interp import MonotoneMap, NafConfig, fit_map, lambda_accuracy
from .numerics import bisect_increasing
from .scores import CalibrationScore, make_score

ALIASES = {
    "isotonic": ("cdf", "linear"),
    "conformal-calibration": ("cdf", "random"),
}

MOMENT_NODES = (np.arange(1000) + 0.5) / 1000


class SplitProvenanceError(ValueError):
    """Calibration rows overlap the rows the base predictor was trained on."""


def resolve_alias(name: str) -> tuple[str, str]:
    """Map a method alias to its (score, interpolator) pair."""
    try:
        return ALIASES[name]
    except KeyError:
        raise ValueError(f"unknown alias {name!r}") from None


@dataclass(frozen=True)
class CalDiagnostics:
    n: int
    tie_count: int
    lam: float


class RecalibratedDistribution:
    """Batch CDF view over the rows of one base prediction."""

    def __init__(self, pred: PredictionOutput, score: CalibrationScore, qmap: MonotoneMap):
        self.pred = pred
        self.score = score
        self.map = qmap

    @property
    def size(self):
        return self.pred.size

    @property
    def continuous(self):
        return self.map.continuous

    def _y(self, y):
        y = np.asarray(y, dtype=np.float64)
        if y.ndim == 0:
            return np.full(self.size, float(y))
        return y

    def cdf(self, y):
        return self.map.eval(self.score(self.pred, self._y(y)))

    def pdf(self, y):
        """Density via the chain rule, ``None`` for step maps."""
        if not self.map.differentiable:
            return None
        y = self._y(y)
        u = self.score(self.pred, y)
        return self.map.derivative(u) * self.score.dy(self.pred, y)

    def logpdf(self, y):
        """Log density, ``None`` for step maps."""
        if not self.map.differentiable:
            return None
        y = self._y(y)
        lq = self.map.log_derivative(self.score(self.pred, y))
        with np.errstate(divide="ignore"):
            return lq + np.log(self.score.dy(self.pred, y))

    def quantile(self, p, method="auto"):
        p = np.broadcast_to(np.asarray(p, dtype=np.float64), (self.size,))
        if method == "auto":
            try:
                return np.asarray(self.score.inverse(self.pred, self.map.inverse(p)),
                                  dtype=np.float64)
            except NotImplementedError:
                method = "bisect"
        if method != "bisect":
            raise ValueError("method must be 'auto' or 'bisect'")
        # bracket around the score-space median, widened as needed
        u_mid = self.map.inverse(np.full(self.size, 0.5))
        start = np.asarray(self.score.inverse(self.pred, u_mid), dtype=np.float64)
        return bisect_increasing(self.cdf, p, start - 1.0, start + 1.0)

    def quantile_grid(self, probs):
        """Quantiles for every row at every level in ``probs``: shape (rows, levels)."""
        return np.stack([self.quantile(np.full(self.size, pj)) for pj in probs], axis=1)

    def mean(self):
        return self.quantile_grid(MOMENT_NODES).mean(axis=1)

    def std(self):
        if not self.map.continuous:
            return None
        Y = self.quantile_grid(MOMENT_NODES)
        return Y.std(axis=1)

    def moments(self):
        Y = self.quantile_grid(MOMENT_NODES)
        std = Y.std(axis=1) if self.map.continuous else None
        return Y.mean(axis=1), std

    def support_hint(self):
        return self.quantile(1e-6), self.quantile(1 - 1e-6)

    def credible_interval(self, c):
        if not 0 < c < 1:
            raise ValueError("credibility level must lie in (0, 1)")
        return self.quantile((1 - c) / 2), self.quantile((1 + c) / 2)


@dataclass(frozen=True)
class RecalibratedPredictor:
    base: object
    score: CalibrationScore
    map: MonotoneMap
    diagnostics: CalDiagnostics

    def __call__(self, features) -> RecalibratedDistribution:
        return self.distribution(features)

    def distribution(self, features) -> RecalibratedDistribution:
        return RecalibratedDistribution(self.base.predict(features), self.score, self.map)


def _check_provenance(base, cal: Dataset):
    if cal.split == "train":
        raise SplitProvenanceError("calibration data is tagged as the training split")
    train_ids = getattr(base, "train_row_ids", None)
    if train_ids is None or cal.row_ids is None:
        return
    base_name = getattr(base, "train_name", None)
    if base_name is not None and base_name != cal.name:
        return
    overlap = np.intersect1d(np.asarray(train_ids), cal.row_ids)
    if overlap.size:
        raise SplitProvenanceError(
            f"{overlap.size} calibration rows were used to train the base predictor"
        )


def recalibrate(base, score, interpolator: str, cal: Dataset, seed: int = 0,
                naf: NafConfig | None = None, jitter: bool = False) -> RecalibratedPredictor:
    """Compute calibration scores on ``cal`` and fit the monotone map to them."""
    if len(cal) == 0:
        raise ValueError("calibration set is empty")
    if isinstance(score, str):
        score = make_score(score)
    _check_provenance(base, cal)
    pred = base.predict(cal.features)
    s = np.asarray(score(pred, cal.labels), dtype=np.float64).reshape(-1)
    qmap = fit_map(interpolator, s, seed=seed, naf=naf, jitter=jitter)
    diag = CalDiagnostics(n=s.size, tie_count=qmap.ties, lam=lambda_accuracy(qmap, s))
    return RecalibratedPredictor(base, score, qmap, diag)


def cdf_eval(H: RecalibratedPredictor, x, y):
    return H.distribution(np.atleast_2d(x)).cdf(y)


def cdf_inverse(H: RecalibratedPredictor, x, p, method="auto"):
    return H.distribution(np.atleast_2d(x)).quantile(p, method=method)


def predictive_moments(H: RecalibratedPredictor, x):
    """Mean and std by midpoint quadrature on 1000 quantile levels; std is
    ``None`` for step maps."""
    return H.distribution(np.atleast_2d(x)).moments()


def credible_interval(H: RecalibratedPredictor, x, c):
    return H.distribution(np.atleast_2d(x)).credible_interval(c)
