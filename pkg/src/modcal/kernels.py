"""Kernel dispatch: the compiled extension when importable, numpy otherwise.

Set ``MODCAL_PURE_PYTHON=1`` to force the numpy path.
"""

from __future__ import annotations

import os

import numpy as np

from . import _pykernels

_impl = _pykernels
BACKEND = "python"
if os.environ.get("MODCAL_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        _impl = _pykernels


def pwl_eval(xs, vs, s, u):
    return _impl.pwl_eval(xs, vs, float(s), u)


def pwl_deriv(xs, vs, s, u):
    return _impl.pwl_deriv(xs, vs, float(s), u)


def pwl_crps(xs, vs, s, u0):
    return _impl.pwl_crps(xs, vs, float(s), u0)


def tail_scale(sorted_knots):
    """Median knot spacing along the last axis, 1 where that is zero or undefined."""
    S = np.asarray(sorted_knots, dtype=np.float64)
    if S.shape[-1] < 2:
        return np.ones(S.shape[:-1]) if S.ndim > 1 else 1.0
    s = np.median(np.diff(S, axis=-1), axis=-1)
    if S.ndim == 1:
        return float(s) if s > 0 else 1.0
    return np.where(s > 0, s, 1.0)


def replicated_linear_pit(sorted_scores, test_scores, scales=None):
    if scales is None:
        scales = tail_scale(sorted_scores)
    return _impl.replicated_linear_pit(sorted_scores, test_scores, scales)
