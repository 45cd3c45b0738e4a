"""Desk-scale base predictors: a small tanh MLP trained by full-batch Adam.

Every kind shares the architecture ``d -> h -> h -> out``; only the output
width and loss change:

=============  =======  =====================================
kind           out      loss
=============  =======  =====================================
point          1        mean squared error
interval       2        pinball at 0.05 and 0.95
quantile-K     K        pinball at (2k-1)/(2K), cumulative softplus
distribution   2        Gaussian NLL, softplus std
ensemble       2 per    K independently seeded distribution nets
=============  =======  =====================================
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .core import Dataset, Ensemble, Gaussian, Interval, Point, Quantiles

log = logging.getLogger(__name__)

HALF_LOG_2PI = 0.5 * np.log(2 * np.pi)
STD_FLOOR = 1e-6
INTERVAL_LEVELS = (0.05, 0.95)
DEFAULT_ENSEMBLE_SIZE = 5


class DivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class KindSpec:
    name: str
    K: int = 1

    @property
    def label(self):
        if self.name == "quantile":
            return f"quantile-{self.K}"
        if self.name == "ensemble" and self.K != DEFAULT_ENSEMBLE_SIZE:
            return f"ensemble-{self.K}"
        return self.name

    @property
    def levels(self):
        if self.name == "interval":
            return np.array(INTERVAL_LEVELS)
        if self.name == "quantile":
            return (2 * np.arange(1, self.K + 1) - 1) / (2 * self.K)
        return None

    @property
    def net_out(self):
        return {"point": 1, "interval": 2, "quantile": self.K,
                "distribution": 2, "ensemble": 2}[self.name]

    @property
    def out_dim(self):
        return 2 * self.K if self.name == "ensemble" else self.net_out


def parse_kind(text: str) -> KindSpec:
    """``"point" | "interval" | "quantile-K" | "distribution" | "ensemble[-K]"``."""
    text = text.strip()
    if text in ("point", "interval", "distribution"):
        return KindSpec(text)
    if text == "ensemble":
        return KindSpec("ensemble", DEFAULT_ENSEMBLE_SIZE)
    head, _, num = text.partition("-")
    if head in ("quantile", "ensemble") and num.isdigit() and int(num) >= 1:
        return KindSpec(head, int(num))
    raise ValueError(
        f"unknown base kind {text!r}; use point, interval, quantile-K, distribution or ensemble"
    )


# ------------------------------------------------------------ network

def init_params(d, hidden, out, rng):
    sizes = [d, hidden, hidden, out]
    params = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        params.append(rng.uniform(-bound, bound, (fan_in, fan_out)))
        params.append(np.zeros(fan_out))
    return params


def forward(params, X):
    W1, b1, W2, b2, W3, b3 = params
    h1 = np.tanh(X @ W1 + b1)
    h2 = np.tanh(h1 @ W2 + b2)
    return h2 @ W3 + b3, (X, h1, h2)


def backward(params, cache, g_out):
    W1, b1, W2, b2, W3, b3 = params
    X, h1, h2 = cache
    gW3 = h2.T @ g_out
    gb3 = g_out.sum(0)
    g2 = (g_out @ W3.T) * (1 - h2 * h2)
    gW2 = h1.T @ g2
    gb2 = g2.sum(0)
    g1 = (g2 @ W2.T) * (1 - h1 * h1)
    gW1 = X.T @ g1
    gb1 = g1.sum(0)
    return [gW1, gb1, gW2, gb2, gW3, gb3]


# ------------------------------------------------------------ losses

def pinball_loss(pred_q, y, alpha):
    """``alpha (y - q)`` when ``y >= q`` else ``(1 - alpha)(q - y)``."""
    d = np.asarray(y, dtype=np.float64) - np.asarray(pred_q, dtype=np.float64)
    return np.where(d >= 0, alpha * d, (alpha - 1) * d)


def pinball_grad(pred_q, y, alpha):
    """d pinball / d q."""
    d = np.asarray(y, dtype=np.float64) - np.asarray(pred_q, dtype=np.float64)
    return np.where(d >= 0, -alpha, 1 - alpha)


def gaussian_nll_loss(mean, std, y):
    std = np.asarray(std, dtype=np.float64)
    if np.any(std <= 0):
        raise ValueError("std must be positive")
    z = (np.asarray(y, dtype=np.float64) - mean) / std
    return HALF_LOG_2PI + np.log(std) + 0.5 * z * z


def gaussian_nll_grad(mean, std, y):
    """Gradient of :func:`gaussian_nll_loss` with respect to (mean, std)."""
    r = np.asarray(y, dtype=np.float64) - mean
    return -r / std ** 2, 1.0 / std - r * r / std ** 3


def _softplus(z):
    return np.logaddexp(0.0, z)


def cumulative_quantiles(raw):
    """Non-decreasing quantiles from raw outputs: ``q_1 = o_1``,
    ``q_k = q_{k-1} + softplus(o_k)``."""
    inc = np.concatenate([raw[:, :1], _softplus(raw[:, 1:])], axis=1)
    return np.cumsum(inc, axis=1)


def output_loss(kind: KindSpec, out, y):
    """Mean loss over rows and its gradient with respect to the raw outputs."""
    m = y.shape[0]
    if kind.name == "point":
        r = out[:, 0] - y
        return float(np.mean(r * r)), (2 * r / m)[:, None]
    if kind.name in ("interval", "quantile"):
        alpha = kind.levels
        q = out if kind.name == "interval" else cumulative_quantiles(out)
        loss = pinball_loss(q, y[:, None], alpha).sum(axis=1).mean()
        gq = pinball_grad(q, y[:, None], alpha) / m
        if kind.name == "interval":
            return float(loss), gq
        # back through the cumulative sum and softplus increments
        tail = np.cumsum(gq[:, ::-1], axis=1)[:, ::-1]
        g = tail.copy()
        g[:, 1:] *= expit(out[:, 1:])
        return float(loss), g
    # Gaussian head
    mu = out[:, 0]
    s = _softplus(out[:, 1]) + STD_FLOOR
    loss = gaussian_nll_loss(mu, s, y).mean()
    gm, gs = gaussian_nll_grad(mu, s, y)
    g = np.stack([gm, gs * expit(out[:, 1])], axis=1) / m
    return float(loss), g


def loss_and_grad(params, X, y, kind: KindSpec):
    out, cache = forward(params, X)
    loss, g_out = output_loss(kind, out, y)
    return loss, backward(params, cache, g_out)


# ------------------------------------------------------------ training

@dataclass(frozen=True)
class TrainMeta:
    seed: int
    epochs: int
    initial_loss: float
    final_loss: float


@dataclass(frozen=True)
class BasePredictor:
    kind: KindSpec
    nets: tuple
    meta: tuple
    n_features: int
    train_row_ids: np.ndarray | None = field(default=None, repr=False)
    train_name: str | None = None

    def raw(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise ValueError(
                f"expected {self.n_features} features, got {X.shape[1]}"
            )
        return [forward(p, X)[0] for p in self.nets]

    def predict(self, X):
        outs = self.raw(X)
        k = self.kind.name
        if k == "point":
            return Point(outs[0][:, 0])
        if k == "interval":
            o = outs[0]
            lo, hi = np.minimum(o[:, 0], o[:, 1]), np.maximum(o[:, 0], o[:, 1])
            crossed = int(np.sum(o[:, 0] > o[:, 1]))
            if crossed:
                log.debug("swapped %d crossing interval heads", crossed)
            # exact ties would violate lo < hi
            hi = np.where(hi - lo < 1e-12, lo + 1e-12 * np.maximum(1.0, np.abs(lo)), hi)
            return Interval(lo, hi)
        if k == "quantile":
            return Quantiles(self.kind.levels, cumulative_quantiles(outs[0]))
        members = tuple(Gaussian(o[:, 0], _softplus(o[:, 1]) + STD_FLOOR) for o in outs)
        if k == "distribution":
            return members[0]
        return Ensemble(members)

    def interval_crossings(self, X) -> int:
        if self.kind.name != "interval":
            return 0
        o = self.raw(X)[0]
        return int(np.sum(o[:, 0] > o[:, 1]))


def _adam_train(params, X, y, kind, epochs, lr):
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    b1, b2, eps = 0.9, 0.999, 1e-8
    initial = None
    loss = np.nan
    for t in range(1, epochs + 1):
        loss, grads = loss_and_grad(params, X, y, kind)
        if not np.isfinite(loss):
            raise DivergenceError(f"loss became non-finite at epoch {t}")
        if initial is None:
            initial = loss
        c1 = 1 - b1 ** t
        c2 = 1 - b2 ** t
        for p, g, mi, vi in zip(params, grads, m, v):
            mi *= b1
            mi += (1 - b1) * g
            vi *= b2
            vi += (1 - b2) * g * g
            p -= lr * (mi / c1) / (np.sqrt(vi / c2) + eps)
    final, _ = loss_and_grad(params, X, y, kind)
    if not np.isfinite(final):
        raise DivergenceError("final loss is non-finite")
    return params, initial if initial is not None else final, final


def train_base(train: Dataset, kind, hidden: int = 64, epochs: int = 2000,
               lr: float = 1e-2, seed: int = 0) -> BasePredictor:
    """Train a base predictor of the given kind; deterministic given ``seed``."""
    if isinstance(kind, str):
        kind = parse_kind(kind)
    if len(train) == 0:
        raise ValueError("training set is empty")
    X, y = train.features, train.labels
    n_nets = kind.K if kind.name == "ensemble" else 1
    head = KindSpec("distribution") if kind.name == "ensemble" else kind
    nets, metas = [], []
    for k in range(n_nets):
        member_seed = seed if n_nets == 1 else seed * 1009 + k
        rng = np.random.default_rng(member_seed)
        params = init_params(X.shape[1], hidden, head.net_out, rng)
        params, first, last = _adam_train(params, X, y, head, epochs, lr)
        for p in params:
            p.setflags(write=False)
        nets.append(tuple(params))
        metas.append(TrainMeta(member_seed, epochs, first, last))
    return BasePredictor(kind, tuple(nets), tuple(metas), X.shape[1],
                         np.asarray(train.row_ids), train.name)


def predict(f: BasePredictor, x):
    return f.predict(x)


@dataclass(frozen=True)
class LinearPointPredictor:
    """Ordinary least squares point predictor (the linear-model oracle setting)."""

    coef: np.ndarray
    intercept: float
    train_row_ids: np.ndarray | None = field(default=None, repr=False)
    train_name: str | None = None
    kind = KindSpec("point")

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return Point(X @ self.coef + self.intercept)


def fit_ols(train: Dataset) -> LinearPointPredictor:
    X = np.hstack([train.features, np.ones((len(train), 1))])
    sol, *_ = np.linalg.lstsq(X, train.labels, rcond=None)
    return LinearPointPredictor(sol[:-1], float(sol[-1]), np.asarray(train.row_ids), train.name)


class FunctionPredictor:
    """Wrap ``fn(X) -> PredictionOutput`` as a base predictor."""

    def __init__(self, fn, kind: str = "custom"):
        self.fn = fn
        self.kind = kind

    def predict(self, X):
        return self.fn(np.atleast_2d(np.asarray(X, dtype=np.float64)))
