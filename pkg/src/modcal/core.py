"""Shared domain types: datasets, splits, standardization and prediction outputs.

Prediction outputs are *batched*: every field of a variant is an array whose
leading axis indexes examples (a 0-d array is a batch of one).  This keeps the
score functions and the recalibrated CDFs vectorized without a separate batch
type.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

import numpy as np
from scipy import special


class VariantMismatchError(TypeError):
    """A score or operation received a prediction type it cannot handle."""


class TooFewRowsError(ValueError):
    pass


def _as_float(a) -> np.ndarray:
    return np.asarray(a, dtype=np.float64)


@dataclass(frozen=True)
class Dataset:
    """Feature matrix, label vector and a name.

    ``row_ids`` identify rows of the originating dataset; they travel through
    :func:`split_dataset` so that the recalibration step can verify it never
    sees rows the base predictor was trained on.
    """

    features: np.ndarray
    labels: np.ndarray
    name: str = "data"
    row_ids: np.ndarray | None = None
    split: str = "all"

    def __post_init__(self):
        X = _as_float(self.features)
        y = _as_float(self.labels).reshape(-1)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2:
            raise ValueError("features must be a 2-d matrix")
        if X.shape[0] != y.shape[0]:
            raise ValueError(
                f"features have {X.shape[0]} rows but labels have {y.shape[0]}"
            )
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("dataset contains NaN or Inf entries")
        ids = np.arange(len(y)) if self.row_ids is None else np.asarray(self.row_ids)
        if ids.shape != y.shape:
            raise ValueError("row_ids must have one entry per row")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "row_ids", ids)

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, idx, split: str | None = None) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(
            self.features[idx],
            self.labels[idx],
            self.name,
            self.row_ids[idx],
            self.split if split is None else split,
        )


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.6
    cal_frac: float = 0.2
    test_frac: float = 0.2
    seed: int = 0

    def __post_init__(self):
        fracs = (self.train_frac, self.cal_frac, self.test_frac)
        if any(not (0.0 < f < 1.0) for f in fracs):
            raise ValueError("split fractions must lie in (0, 1)")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ValueError(f"split fractions sum to {sum(fracs)}, expected 1")
        if int(self.seed) < 0:
            raise ValueError("seed must be unsigned")


def split_dataset(data: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset, Dataset]:
    """Random disjoint train/calibration/test partition.

    Calibration and test sizes are ``round(frac * n)``; the train split takes
    the remainder.  The permutation depends only on ``spec.seed``.
    """
    n = len(data)
    if n < 10:
        raise TooFewRowsError(f"need at least 10 rows to split, got {n}")
    n_cal = int(round(spec.cal_frac * n))
    n_test = int(round(spec.test_frac * n))
    n_train = n - n_cal - n_test
    if min(n_train, n_cal, n_test) < 1:
        raise TooFewRowsError(
            f"split sizes ({n_train}, {n_cal}, {n_test}) leave an empty split"
        )
    perm = np.random.default_rng(spec.seed).permutation(n)
    train = data.subset(np.sort(perm[:n_train]), "train")
    cal = data.subset(np.sort(perm[n_train:n_train + n_cal]), "cal")
    test = data.subset(np.sort(perm[n_train + n_cal:]), "test")
    return train, cal, test


@dataclass(frozen=True)
class Standardizer:
    feature_means: np.ndarray
    feature_stds: np.ndarray
    label_mean: float
    label_std: float

    def apply_features(self, X) -> np.ndarray:
        return (_as_float(X) - self.feature_means) / self.feature_stds

    def apply_labels(self, y) -> np.ndarray:
        return (_as_float(y) - self.label_mean) / self.label_std

    def invert_features(self, Z) -> np.ndarray:
        return _as_float(Z) * self.feature_stds + self.feature_means

    def invert_labels(self, z) -> np.ndarray:
        return _as_float(z) * self.label_std + self.label_mean

    def apply(self, data: Dataset) -> Dataset:
        return Dataset(
            self.apply_features(data.features),
            self.apply_labels(data.labels),
            data.name,
            data.row_ids,
            data.split,
        )

    def invert(self, data: Dataset) -> Dataset:
        return Dataset(
            self.invert_features(data.features),
            self.invert_labels(data.labels),
            data.name,
            data.row_ids,
            data.split,
        )


def _safe_std(s):
    s = np.where(s > 0, s, 1.0)
    return s


def fit_standardizer(train: Dataset) -> Standardizer:
    """Population mean/std per column; constant columns get std 1."""
    if len(train) == 0:
        raise ValueError("cannot standardize an empty dataset")
    mu = train.features.mean(axis=0)
    sd = _safe_std(train.features.std(axis=0))
    y_sd = float(_safe_std(np.array([train.labels.std()]))[0])
    return Standardizer(mu, sd, float(train.labels.mean()), y_sd)


def read_csv(path, name: str | None = None) -> Dataset:
    """Load a numeric CSV whose last column is the label.

    A header row is detected by a non-numeric first row.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ValueError(f"{path}: empty CSV")

    def numeric(row):
        try:
            [float(c) for c in row]
        except ValueError:
            return False
        return True

    if not numeric(rows[0]):
        rows = rows[1:]
    try:
        arr = np.array([[float(c) for c in r] for r in rows], dtype=np.float64)
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric cell ({exc})") from None
    if arr.ndim != 2 or arr.shape[1] < 2:
        raise ValueError(f"{path}: need at least one feature column and a label")
    if name is None:
        name = str(path).rsplit("/", 1)[-1].rsplit(".", 1)[0]
    return Dataset(arr[:, :-1], arr[:, -1], name)


# --------------------------------------------------------------------------
# prediction outputs


@runtime_checkable
class CdfView(Protocol):
    """A batch of predictive CDFs, one per example."""

    def cdf(self, y) -> np.ndarray: ...

    def quantile(self, p) -> np.ndarray: ...

    def mean(self) -> np.ndarray | None: ...

    def std(self) -> np.ndarray | None: ...

    def support_hint(self) -> tuple[np.ndarray, np.ndarray]: ...


class PredictionOutput:
    """Base class of the five prediction types."""

    kind: str = ""

    @property
    def size(self) -> int:
        raise NotImplementedError

    def take(self, idx) -> "PredictionOutput":
        raise NotImplementedError


@dataclass(frozen=True)
class Point(PredictionOutput):
    value: np.ndarray
    kind = "point"

    def __post_init__(self):
        v = _as_float(self.value)
        if not np.all(np.isfinite(v)):
            raise ValueError("point prediction must be finite")
        object.__setattr__(self, "value", v)

    @property
    def size(self):
        return self.value.size

    def take(self, idx):
        return Point(self.value.reshape(-1)[idx])


@dataclass(frozen=True)
class Interval(PredictionOutput):
    lo: np.ndarray
    hi: np.ndarray
    kind = "interval"

    def __post_init__(self):
        lo, hi = np.broadcast_arrays(_as_float(self.lo), _as_float(self.hi))
        if not np.all(lo < hi):
            raise ValueError("interval prediction needs lo < hi")
        object.__setattr__(self, "lo", np.array(lo))
        object.__setattr__(self, "hi", np.array(hi))

    @property
    def size(self):
        return self.lo.size

    def take(self, idx):
        return Interval(self.lo.reshape(-1)[idx], self.hi.reshape(-1)[idx])


@dataclass(frozen=True)
class Quantiles(PredictionOutput):
    """Predicted quantiles ``values[..., k]`` at ``levels[k]``."""

    levels: np.ndarray
    values: np.ndarray
    kind = "quantile"

    def __post_init__(self):
        lv = _as_float(self.levels).reshape(-1)
        v = _as_float(self.values)
        if v.ndim == 1:
            v = v.reshape(1, -1) if v.shape[0] == lv.shape[0] else v
        if v.shape[-1] != lv.shape[0]:
            raise ValueError("quantile values must have one column per level")
        if np.any(lv <= 0) or np.any(lv >= 1):
            raise ValueError("quantile levels must lie in (0, 1)")
        if np.any(np.diff(lv) <= 0):
            raise ValueError("quantile levels must be strictly increasing")
        if np.any(np.diff(v, axis=-1) < 0):
            raise ValueError("quantile values must be non-decreasing")
        object.__setattr__(self, "levels", lv)
        object.__setattr__(self, "values", v.reshape(-1, lv.shape[0]))

    @property
    def size(self):
        return self.values.shape[0]

    def take(self, idx):
        return Quantiles(self.levels, self.values[idx].reshape(-1, self.levels.size))


@dataclass(frozen=True)
class Gaussian(PredictionOutput):
    loc: np.ndarray
    scale: np.ndarray
    kind = "gaussian"

    def __post_init__(self):
        m, s = np.broadcast_arrays(_as_float(self.loc), _as_float(self.scale))
        if not (np.all(np.isfinite(m)) and np.all(s > 0) and np.all(np.isfinite(s))):
            raise ValueError("Gaussian needs a finite mean and positive std")
        object.__setattr__(self, "loc", np.array(m))
        object.__setattr__(self, "scale", np.array(s))

    @property
    def size(self):
        return self.loc.size

    def take(self, idx):
        return Gaussian(self.loc.reshape(-1)[idx], self.scale.reshape(-1)[idx])

    def cdf(self, y):
        return special.ndtr((_as_float(y) - self.loc) / self.scale)

    def pdf(self, y):
        z = (_as_float(y) - self.loc) / self.scale
        return np.exp(-0.5 * z * z) / (np.sqrt(2 * np.pi) * self.scale)

    def quantile(self, p):
        return self.loc + self.scale * special.ndtri(_as_float(p))

    def mean(self):
        return self.loc

    def std(self):
        return self.scale

    def support_hint(self):
        return self.loc - 8 * self.scale, self.loc + 8 * self.scale


@dataclass(frozen=True)
class Ensemble(PredictionOutput):
    """Weighted collection of member predictions."""

    members: tuple
    weights: np.ndarray = field(default=None)
    kind = "ensemble"

    def __post_init__(self):
        members = tuple(self.members)
        if not members:
            raise ValueError("ensemble needs at least one member")
        w = np.ones(len(members)) if self.weights is None else _as_float(self.weights)
        if w.shape != (len(members),):
            raise ValueError("ensemble weights must match the number of members")
        if np.any(w < 0) or w.sum() <= 0:
            raise ValueError("ensemble weights must be nonnegative with positive sum")
        sizes = {m.size for m in members}
        if len(sizes) != 1:
            raise ValueError("ensemble members disagree on batch size")
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "weights", w)

    @property
    def size(self):
        return self.members[0].size

    def take(self, idx):
        return Ensemble(tuple(m.take(idx) for m in self.members), self.weights)

    # mixture CdfView; needs every member to expose a CDF
    def _mix(self):
        for m in self.members:
            if not isinstance(m, Gaussian) and not isinstance(m, CdfView):
                raise VariantMismatchError("mixture CDF needs distribution members")
        return self.weights / self.weights.sum()

    def cdf(self, y):
        w = self._mix()
        return sum(wk * m.cdf(y) for wk, m in zip(w, self.members))

    def pdf(self, y):
        w = self._mix()
        return sum(wk * m.pdf(y) for wk, m in zip(w, self.members))

    def mean(self):
        w = self._mix()
        return sum(wk * m.mean() for wk, m in zip(w, self.members))

    def std(self):
        # law of total variance
        w = self._mix()
        mu = self.mean()
        second = sum(wk * (m.std() ** 2 + m.mean() ** 2) for wk, m in zip(w, self.members))
        return np.sqrt(np.maximum(second - mu ** 2, 0.0))

    def support_hint(self):
        lows, highs = zip(*(m.support_hint() for m in self.members))
        return np.minimum.reduce(lows), np.maximum.reduce(highs)

    def quantile(self, p):
        from .numerics import bisect_increasing

        lo, hi = self.support_hint()
        p = _as_float(p)
        shape = np.broadcast(p, lo).shape
        return bisect_increasing(
            lambda y: self.cdf(y), np.broadcast_to(p, shape), lo, hi
        )


def broadcast_take(pred: PredictionOutput, repeats: int) -> PredictionOutput:
    """Repeat every example ``repeats`` times (row-major), for evaluating a
    batch of predictions on a grid of labels."""
    idx = np.repeat(np.arange(pred.size), repeats)
    return pred.take(idx)

