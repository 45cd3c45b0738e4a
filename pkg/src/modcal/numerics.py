"""Vectorized root finding and quadrature used by the CDF machinery."""

from __future__ import annotations

import numpy as np


class BracketError(RuntimeError):
    pass


def bisect_increasing(f, target, lo, hi, *, max_expand=200, xtol=1e-12,
                      ftol=1e-12, max_iter=200):
    """Solve ``f(x) = target`` elementwise for a non-decreasing ``f``.

    Returns the generalized inverse ``inf{x : f(x) >= target}`` up to
    ``xtol`` (relative to the bracket scale).  The initial bracket
    ``[lo, hi]`` is widened geometrically until it contains the root.
    """
    target = np.asarray(target, dtype=np.float64)
    lo = np.array(np.broadcast_to(lo, target.shape), dtype=np.float64)
    hi = np.array(np.broadcast_to(hi, target.shape), dtype=np.float64)
    bad = ~(lo < hi)
    mid = 0.5 * (lo + hi)
    lo[bad] = mid[bad] - 1.0
    hi[bad] = mid[bad] + 1.0

    width = hi - lo
    for _ in range(max_expand):
        low_ok = f(lo) < target
        if low_ok.all():
            break
        lo = np.where(low_ok, lo, lo - width)
        width = np.where(low_ok, width, 2 * width)
    else:
        raise BracketError("could not bracket from below")
    width = hi - lo
    for _ in range(max_expand):
        high_ok = f(hi) >= target
        if high_ok.all():
            break
        hi = np.where(high_ok, hi, hi + width)
        width = np.where(high_ok, width, 2 * width)
    else:
        raise BracketError("could not bracket from above")

    scale = np.maximum(1.0, np.maximum(np.abs(lo), np.abs(hi)))
    active = np.ones(target.shape, dtype=bool)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        up = fm >= target
        hi = np.where(up & active, mid, hi)
        lo = np.where(~up & active, mid, lo)
        done = (hi - lo <= xtol * scale) | (np.abs(fm - target) <= ftol)
        # keep the side that satisfies f >= target
        hi = np.where(done & active & up, mid, hi)
        active &= ~done
        if not active.any():
            break
    return hi


def golden_section_min(f, lo, hi, *, tol=1e-9, max_iter=200):
    """Elementwise minimizer of a unimodal ``f`` on ``[lo, hi]``."""
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a = np.array(lo, dtype=np.float64)
    b = np.array(hi, dtype=np.float64)
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if np.all(b - a <= tol * np.maximum(1.0, np.abs(a) + np.abs(b))):
            break
        left = fc < fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        probe = np.where(left, b - invphi * (b - a), a + invphi * (b - a))
        fp = f(probe)
        c, d = np.where(left, probe, d), np.where(left, c, probe)
        fc, fd = np.where(left, fp, fd), np.where(left, fc, fp)
    return 0.5 * (a + b)


def adaptive_simpson(f, a, b, *, tol=1e-7, max_depth=50):
    """Integrate ``f(idx, x)`` over ``[a[k], b[k]]`` for every k.

    ``f`` receives the problem index array and abscissae and must be
    vectorized.  Intervals are subdivided until the Richardson error
    estimate falls below their share of ``tol``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n = a.shape[0]
    out = np.zeros(n)
    idx = np.arange(n)
    lo, hi = a.copy(), b.copy()
    mid = 0.5 * (lo + hi)
    flo, fmid, fhi = f(idx, lo), f(idx, mid), f(idx, hi)
    whole = (hi - lo) / 6.0 * (flo + 4 * fmid + fhi)
    eps = np.full(n, tol)
    for depth in range(max_depth + 1):
        if idx.size == 0:
            break
        lm = 0.5 * (lo + mid)
        rm = 0.5 * (mid + hi)
        flm, frm = f(idx, lm), f(idx, rm)
        left = (mid - lo) / 6.0 * (flo + 4 * flm + fmid)
        right = (hi - mid) / 6.0 * (fmid + 4 * frm + fhi)
        err = left + right - whole
        ok = (np.abs(err) <= 15 * eps) | (depth == max_depth)
        np.add.at(out, idx[ok], (left + right + err / 15.0)[ok])
        keep = ~ok
        idx = np.concatenate([idx[keep], idx[keep]])
        lo, hi, mid = (
            np.concatenate([lo[keep], mid[keep]]),
            np.concatenate([mid[keep], hi[keep]]),
            np.concatenate([lm[keep], rm[keep]]),
        )
        flo, fhi, fmid = (
            np.concatenate([flo[keep], fmid[keep]]),
            np.concatenate([fmid[keep], fhi[keep]]),
            np.concatenate([flm[keep], frm[keep]]),
        )
        whole = np.concatenate([left[keep], right[keep]])
        eps = np.concatenate([eps[keep], eps[keep]]) / 2.0
    return out
