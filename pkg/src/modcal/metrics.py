"""Evaluation metrics for recalibrated distribution predictors.

All functions take a :class:`~modcal.mcc.RecalibratedDistribution` over the
test rows and the test labels.  Quantities that do not exist for step maps
(NLL, STD) come back as ``None``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .interp import PiecewiseLinearMap
from .numerics import adaptive_simpson

DEFAULT_LEVELS = np.round(np.arange(1, 20) * 0.05, 10)
ECE_RESAMPLES = 200
CRPS_TAIL = 1e-6


def _labels(y):
    return np.asarray(y, dtype=np.float64).reshape(-1)


def nll(dist, y):
    """Mean negative log density; ``None`` when the map has no density."""
    logd = dist.logpdf(_labels(y))
    if logd is None:
        return None
    return float(-np.mean(logd))


def crps_closed_form(dist, y):
    """Exact CRPS for piecewise-linear maps composed with an affine score.

    With ``y = A + B u`` the integral in y is ``B`` times the integral in
    score units, which the kernel evaluates piece by piece.
    """
    if not isinstance(dist.map, PiecewiseLinearMap):
        return None
    aff = dist.score.affine(dist.pred)
    if aff is None:
        return None
    _, B = aff
    y = _labels(y)
    u0 = dist.score(dist.pred, y)
    return np.broadcast_to(B, u0.shape) * dist.map.crps(u0)


def _breakpoints(dist):
    """Label-space images of the map's knots, shape (rows, K), or ``None``
    for maps without kinks."""
    if not isinstance(dist.map, PiecewiseLinearMap):
        return None
    xs = np.unique(dist.map.xs)
    rows = dist.size
    try:
        Y = [dist.score.inverse(dist.pred, np.full(rows, x)) for x in xs]
    except NotImplementedError:
        return None
    return np.sort(np.stack([np.asarray(v, dtype=np.float64) for v in Y], axis=1), axis=1)


def _segments(a, b, breaks):
    """Split each ``[a[k], b[k]]`` at the breakpoints inside it."""
    if breaks is None:
        return np.arange(a.size), a, b
    rows, lo, hi = [], [], []
    for k in range(a.size):
        inner = breaks[k][(breaks[k] > a[k]) & (breaks[k] < b[k])]
        pts = np.concatenate([[a[k]], inner, [b[k]]])
        rows.append(np.full(pts.size - 1, k))
        lo.append(pts[:-1])
        hi.append(pts[1:])
    return np.concatenate(rows), np.concatenate(lo), np.concatenate(hi)


def crps_quadrature(dist, y, tol=1e-7):
    """CRPS by adaptive Simpson over ``[Q(1e-6), Q(1 - 1e-6)]`` (extended to
    cover the observation), split at the observation.

    For piecewise-linear maps the range is also split at the knots, where
    the integrand has kinks that a five-point error estimate can miss; the
    tolerance is shared out over the pieces.
    """
    y = _labels(y)
    lo, hi = dist.support_hint()
    a = np.minimum(lo, y)
    b = np.maximum(hi, y)
    pred, score, qmap = dist.pred, dist.score, dist.map
    breaks = _breakpoints(dist)
    out = np.zeros(y.size)
    for left, right, upper in ((a, y, False), (y, b, True)):
        row, s_lo, s_hi = _segments(left, right, breaks)
        per_row = np.bincount(row, minlength=y.size)

        def f(idx, t, row=row, upper=upper):
            F = qmap.eval(score(pred.take(row[idx]), t))
            return (1.0 - F) ** 2 if upper else F ** 2

        vals = adaptive_simpson(f, s_lo, s_hi, tol=tol / per_row.max())
        out += np.bincount(row, weights=vals, minlength=y.size)
    return out


def crps_values(dist, y, method="auto"):
    if method in ("auto", "closed"):
        out = crps_closed_form(dist, y)
        if out is not None:
            return out
        if method == "closed":
            raise ValueError("no closed form for this map/score combination")
    return crps_quadrature(dist, y)


def crps(dist, y, method="auto") -> float:
    return float(np.mean(crps_values(dist, y, method)))


def pit_values(dist, y):
    return dist.cdf(_labels(y))


def ks_uniformity(pits) -> float:
    """Two-sided one-sample Kolmogorov-Smirnov statistic against U(0, 1)."""
    p = np.sort(np.asarray(pits, dtype=np.float64).reshape(-1))
    m = p.size
    i = np.arange(1, m + 1)
    return float(max(np.max(i / m - p), np.max(p - (i - 1) / m)))


def coverage_errors(pits, levels=DEFAULT_LEVELS):
    p = np.sort(np.asarray(pits, dtype=np.float64).reshape(-1))
    frac = np.searchsorted(p, levels, side="right") / p.size
    return frac - np.asarray(levels)


def ece_raw(pits, levels=DEFAULT_LEVELS) -> float:
    return float(np.mean(np.abs(coverage_errors(pits, levels))))


def ece_debiased(pits, levels=DEFAULT_LEVELS, seed=0, resamples=ECE_RESAMPLES) -> float:
    """Raw ECE minus its expectation under perfectly uniform PITs of the
    same sample size, estimated from seeded uniform resamples."""
    pits = np.asarray(pits, dtype=np.float64).reshape(-1)
    rng = np.random.default_rng(seed)
    null = [ece_raw(rng.uniform(size=pits.size), levels) for _ in range(resamples)]
    return ece_raw(pits, levels) - float(np.mean(null))


def sharpness(dist, c=0.95):
    """Mean predictive std (``None`` for step maps) and mean width of the
    centered c-credible interval."""
    mean, std = dist.moments()
    L, U = dist.credible_interval(c)
    return (None if std is None else float(np.mean(std))), float(np.mean(U - L))


def calibration_bound_check(pits, lam, n, levels=DEFAULT_LEVELS, mc_slack=None):
    """Check ``max_j |P(PIT <= p_j) - p_j| <= (1 + lam)/(n + 1) + mc_slack``.

    Returns ``(passed, max_violation, bound)``.  The default slack is the
    three-sigma binomial term at p = 1/2.
    """
    pits = np.asarray(pits, dtype=np.float64).reshape(-1)
    if mc_slack is None:
        mc_slack = 3 * math.sqrt(0.25 / pits.size)
    dev = float(np.max(np.abs(coverage_errors(pits, levels))))
    bound = (1 + lam) / (n + 1) + mc_slack
    return dev <= bound, dev, bound


def pit_histogram(pits, bins=20):
    counts, _ = np.histogram(np.clip(pits, 0, 1), bins=bins, range=(0.0, 1.0))
    return counts


@dataclass(frozen=True)
class MetricRow:
    nll: float | None
    crps: float
    std: float | None
    ci95_width: float
    ece: float
    pit_ks: float

    def to_dict(self):
        return asdict(self)


def evaluate(dist, y, seed=0):
    """All metrics for one test set; returns the row and the PIT values."""
    y = _labels(y)
    pits = pit_values(dist, y)
    std, width = sharpness(dist)
    row = MetricRow(
        nll=nll(dist, y),
        crps=crps(dist, y),
        std=std,
        ci95_width=width,
        ece=ece_debiased(pits, seed=seed),
        pit_ks=ks_uniformity(pits),
    )
    return row, pits
