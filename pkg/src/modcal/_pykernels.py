"""Pure numpy implementations of the hot kernels.

A piecewise-linear monotone map is described by knots ``xs`` (non-decreasing;
a repeated knot encodes a jump), values ``vs`` and a tail scale ``s``.  Below
``xs[0]`` the map decays as ``vs[0] * exp((u - xs[0]) / s)`` and above
``xs[-1]`` it rises as ``1 - (1 - vs[-1]) * exp(-(u - xs[-1]) / s)``.  Step maps
set ``vs[0] = 0`` and ``vs[-1] = 1`` so their tails vanish.
"""

from __future__ import annotations

import numpy as np


def _locate(xs, u):
    # last knot index k with xs[k] <= u, or -1
    return np.searchsorted(xs, u, side="right") - 1


def pwl_eval(xs, vs, s, u):
    xs = np.asarray(xs, dtype=np.float64)
    vs = np.asarray(vs, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    N = xs.size
    k = _locate(xs, u)
    kc = np.clip(k, 0, N - 2) if N > 1 else np.zeros_like(k)
    if N > 1:
        h = xs[kc + 1] - xs[kc]
        frac = np.where(h > 0, (u - xs[kc]) / np.where(h > 0, h, 1.0), 1.0)
        inner = vs[kc] + (vs[kc + 1] - vs[kc]) * frac
    else:
        inner = np.full(u.shape, vs[0])
    with np.errstate(over="ignore"):
        below = vs[0] * np.exp(np.minimum(u - xs[0], 0.0) / s)
        above = 1.0 - (1.0 - vs[-1]) * np.exp(-np.maximum(u - xs[-1], 0.0) / s)
    return np.where(k < 0, below, np.where(k >= N - 1, above, inner))


def pwl_deriv(xs, vs, s, u):
    """Right derivative of :func:`pwl_eval` (infinite inside jumps is never hit)."""
    xs = np.asarray(xs, dtype=np.float64)
    vs = np.asarray(vs, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    N = xs.size
    k = _locate(xs, u)
    if N > 1:
        kc = np.clip(k, 0, N - 2)
        h = xs[kc + 1] - xs[kc]
        inner = (vs[kc + 1] - vs[kc]) / np.where(h > 0, h, np.inf)
    else:
        inner = np.zeros(u.shape)
    below = vs[0] / s * np.exp(np.minimum(u - xs[0], 0.0) / s)
    above = (1.0 - vs[-1]) / s * np.exp(-np.maximum(u - xs[-1], 0.0) / s)
    return np.where(k < 0, below, np.where(k >= N - 1, above, inner))


def _tail_sq(p, d, s):
    # integral over [0, d] of (1 - p exp(-t / s))^2 dt
    e1 = -np.expm1(-d / s)
    e2 = -np.expm1(-2.0 * d / s)
    return d - 2.0 * p * s * e1 + 0.5 * p * p * s * e2


def pwl_crps(xs, vs, s, u0):
    """``int (q(u) - 1{u >= u0})^2 du`` for every entry of ``u0``."""
    xs = np.asarray(xs, dtype=np.float64)
    vs = np.asarray(vs, dtype=np.float64)
    u0 = np.asarray(u0, dtype=np.float64)
    N = xs.size
    ws = 1.0 - vs
    h = np.diff(xs)
    seg_q = h * (vs[:-1] ** 2 + vs[:-1] * vs[1:] + vs[1:] ** 2) / 3.0
    seg_w = h * (ws[:-1] ** 2 + ws[:-1] * ws[1:] + ws[1:] ** 2) / 3.0
    A = np.concatenate([[0.0], np.cumsum(seg_q)]) + 0.5 * vs[0] ** 2 * s
    B = np.concatenate([np.cumsum(seg_w[::-1])[::-1], [0.0]]) + 0.5 * ws[-1] ** 2 * s

    k = _locate(xs, u0)
    out = np.empty(u0.shape)

    lo = k < 0
    d = xs[0] - u0[lo]
    out[lo] = (0.5 * vs[0] ** 2 * s * np.exp(-2.0 * d / s)
               + _tail_sq(vs[0], d, s) + B[0])

    hi = k >= N - 1
    d = u0[hi] - xs[-1]
    out[hi] = (A[-1] + _tail_sq(ws[-1], d, s)
               + 0.5 * ws[-1] ** 2 * s * np.exp(-2.0 * d / s))

    mid = ~(lo | hi)
    if mid.any():
        km = k[mid]
        um = u0[mid]
        x0, x1 = xs[km], xs[km + 1]
        v0, v1 = vs[km], vs[km + 1]
        qm = v0 + (v1 - v0) * (um - x0) / (x1 - x0)
        wm, w1 = 1.0 - qm, 1.0 - v1
        out[mid] = (A[km] + (um - x0) * (v0 * v0 + v0 * qm + qm * qm) / 3.0
                    + (x1 - um) * (wm * wm + wm * w1 + w1 * w1) / 3.0 + B[km + 1])
    return out


def replicated_linear_pit(sorted_scores, test_scores, scales):
    """PIT of ``test_scores[r]`` under the linear map fitted to row ``r``.

    ``sorted_scores`` has shape (R, n) with each row ascending and ``scales``
    holds each row's tail scale.  Rows are independent calibration sets,
    which is what marginal-coverage Monte Carlo needs.
    """
    S = np.asarray(sorted_scores, dtype=np.float64)
    t = np.asarray(test_scores, dtype=np.float64)
    s = np.asarray(scales, dtype=np.float64)
    R, n = S.shape
    i = (S <= t[:, None]).sum(axis=1)  # knots at or below t
    rows = np.arange(R)
    lo = S[rows, np.clip(i - 1, 0, n - 1)]
    hi = S[rows, np.clip(i, 0, n - 1)]
    gap = hi - lo
    frac = np.where(gap > 0, (t - lo) / np.where(gap > 0, gap, 1.0), 0.0)
    inner = (i + frac) / (n + 1)
    below = np.exp(np.minimum(t - S[:, 0], 0.0) / s) / (n + 1)
    above = 1.0 - np.exp(-np.maximum(t - S[:, -1], 0.0) / s) / (n + 1)
    return np.where(i == 0, below, np.where(i >= n, above, inner))
