"""Interpolation algorithms: sorted calibration scores to a monotone map into [0, 1].

Naive, linear and random maps are piecewise linear (a step map is a piecewise
linear map whose knots repeat), which lets them share the evaluation and CRPS
kernels.  The NAF map is a convex combination of logistic sigmoids.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit, logit, softmax

from . import kernels
from .numerics import bisect_increasing

log = logging.getLogger(__name__)

INTERPOLATORS = ("naive", "linear", "random", "naf")


class TieWarning(UserWarning):
    """Calibration scores contain exact duplicates."""


class NafConvergenceError(RuntimeError):
    def __init__(self, lam: float, iters: int):
        super().__init__(f"NAF fit reached lambda={lam:.3g} after {iters} iterations")
        self.lam = lam
        self.iters = iters


def _prepare(scores, jitter=False, seed=0):
    u = np.asarray(scores, dtype=np.float64).reshape(-1)
    if u.size == 0:
        raise ValueError("cannot fit a map to an empty score set")
    if not np.all(np.isfinite(u)):
        raise ValueError("scores must be finite")
    u = np.sort(u, kind="stable")
    ties = int(np.sum(np.diff(u) == 0))
    if ties and jitter:
        span = u[-1] - u[0]
        mag = 1e-9 * (span if span > 0 else max(abs(u[0]), 1.0))
        u = np.sort(u + np.random.default_rng(seed).uniform(-mag, mag, u.size))
        ties = int(np.sum(np.diff(u) == 0))
    if ties:
        warnings.warn(f"{ties} tied calibration scores", TieWarning, stacklevel=3)
    return u, ties


class MonotoneMap:
    """Fitted non-decreasing map q from scores to [0, 1]."""

    kind = ""
    continuous = True
    differentiable = True

    def __init__(self, knots, ties=0):
        self.knots = np.asarray(knots, dtype=np.float64)
        self.knots.setflags(write=False)
        self.n = self.knots.size
        self.ties = ties

    def __call__(self, u):
        return self.eval(u)

    def eval(self, u):
        raise NotImplementedError

    def derivative(self, u):
        """dq/du; ``None`` for step maps."""
        raise NotImplementedError

    def log_derivative(self, u):
        """log dq/du; ``None`` for step maps."""
        d = self.derivative(u)
        if d is None:
            return None
        with np.errstate(divide="ignore"):
            return np.log(d)

    def inverse(self, p):
        """Generalized inverse ``inf{u : q(u) >= p}``."""
        raise NotImplementedError

    def support(self, eps=1e-6):
        return self.inverse(eps), self.inverse(1 - eps)

    def __repr__(self):
        return f"{type(self).__name__}(n={self.n})"


class PiecewiseLinearMap(MonotoneMap):
    """Piecewise-linear map with exponential tails of scale ``scale``."""

    def __init__(self, knots, xs, vs, scale, ties=0):
        super().__init__(knots, ties)
        self.xs = np.asarray(xs, dtype=np.float64)
        self.vs = np.asarray(vs, dtype=np.float64)
        self.scale = float(scale)
        for a in (self.xs, self.vs):
            a.setflags(write=False)

    def eval(self, u):
        return kernels.pwl_eval(self.xs, self.vs, self.scale, u)

    def derivative(self, u):
        if not self.differentiable:
            return None
        return kernels.pwl_deriv(self.xs, self.vs, self.scale, u)

    def log_derivative(self, u):
        # the exponential tails are evaluated in log space so far-out
        # observations keep a finite (if large) negative log density
        if not self.differentiable:
            return None
        u = np.asarray(u, dtype=np.float64)
        xs, vs, s = self.xs, self.vs, self.scale
        with np.errstate(divide="ignore"):
            out = np.log(self.derivative(u))
            below = np.log(vs[0] / s) + (u - xs[0]) / s
            above = np.log((1.0 - vs[-1]) / s) - (u - xs[-1]) / s
        out = np.where(u < xs[0], below, out)
        return np.where(u > xs[-1], above, out)

    def crps(self, u0):
        """``int (q(u) - 1{u >= u0})^2 du`` in score units."""
        return kernels.pwl_crps(self.xs, self.vs, self.scale, u0)

    def inverse(self, p):
        p = np.asarray(p, dtype=np.float64)
        xs, vs, s = self.xs, self.vs, self.scale
        k = np.searchsorted(vs, p, side="left")
        kc = np.clip(k, 1, xs.size - 1) if xs.size > 1 else np.zeros_like(k)
        if xs.size > 1:
            dv = vs[kc] - vs[kc - 1]
            frac = np.where(dv > 0, (p - vs[kc - 1]) / np.where(dv > 0, dv, 1.0), 1.0)
            inner = xs[kc - 1] + frac * (xs[kc] - xs[kc - 1])
        else:
            inner = np.full(p.shape, xs[0])
        with np.errstate(divide="ignore", invalid="ignore"):
            below = np.where(p <= 0, -np.inf,
                             xs[0] + s * np.log(np.where(p > 0, p, 1.0) / vs[0]) if vs[0] > 0 else xs[0])
            above = np.where(p >= 1, np.inf,
                             xs[-1] - s * np.log(np.where(p < 1, 1 - p, 1.0) / (1 - vs[-1]))
                             if vs[-1] < 1 else xs[-1])
        out = np.where(p <= vs[0], np.where(p == vs[0], xs[0], below),
                       np.where(p > vs[-1], above, inner))
        return out


class LinearMap(PiecewiseLinearMap):
    kind = "linear"

    def __init__(self, knots, ties=0):
        n = len(knots)
        vs = np.arange(1, n + 1) / (n + 1)
        super().__init__(knots, knots, vs, kernels.tail_scale(knots), ties)


class NaiveMap(PiecewiseLinearMap):
    """``q(u) = i/n`` on ``[u_(i), u_(i+1))``; zero below the first knot."""

    kind = "naive"
    continuous = False
    differentiable = False

    def __init__(self, knots, ties=0):
        n = len(knots)
        xs = np.repeat(knots, 2)
        vs = np.repeat(np.arange(n + 1) / n, 2)[1:-1]
        super().__init__(knots, xs, vs, kernels.tail_scale(knots), ties)


class RandomMap(PiecewiseLinearMap):
    """``q(u) = (i + U)/(n+1)`` on ``[u_(i), u_(i+1))`` with one shared draw U.

    The outer steps are closed off by ghost knots one tail scale beyond the
    extreme scores: q is 0 below ``u_(1) - s`` and 1 from ``u_(n) + s`` on.
    """

    kind = "random"
    continuous = False
    differentiable = False

    def __init__(self, knots, U, ties=0):
        if not 0.0 <= U < 1.0:
            raise ValueError("U must lie in [0, 1)")
        n = len(knots)
        s = kernels.tail_scale(knots)
        self.U = float(U)
        ext = np.concatenate([[knots[0] - s], knots, [knots[-1] + s]])
        levels = np.concatenate([[0.0], (np.arange(n + 1) + U) / (n + 1), [1.0]])
        xs = np.repeat(ext, 2)
        vs = np.repeat(levels, 2)[1:-1]
        super().__init__(knots, xs, vs, s, ties)


def fit_naive(scores, *, jitter=False, seed=0) -> NaiveMap:
    u, ties = _prepare(scores, jitter, seed)
    return NaiveMap(u, ties)


def fit_linear(scores, *, jitter=False, seed=0) -> LinearMap:
    u, ties = _prepare(scores, jitter, seed)
    return LinearMap(u, ties)


def fit_random(scores, seed=0, *, jitter=False) -> RandomMap:
    u, ties = _prepare(scores, jitter, seed)
    U = np.random.default_rng(seed).uniform()
    return RandomMap(u, U, ties)


def lambda_accuracy(qmap: MonotoneMap, scores) -> float:
    u = np.sort(np.asarray(scores, dtype=np.float64).reshape(-1))
    n = u.size
    i = np.arange(1, n + 1)
    return float(np.max(np.abs(qmap.eval(u) * (n + 1) - i)))


# ---------------------------------------------------------------- NAF

@dataclass(frozen=True)
class NafConfig:
    hidden_units: int = 200
    max_iters: int = 5000
    learning_rate: float = 1e-2
    target_accuracy: float = 1e-3
    optimizer: str = "lm"
    strict: bool = True

    def __post_init__(self):
        if self.hidden_units < 1:
            raise ValueError("hidden_units must be >= 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not self.target_accuracy > 0:
            raise ValueError("target_accuracy must be positive")
        if self.optimizer not in ("lm", "adam"):
            raise ValueError("optimizer must be 'lm' or 'adam'")


def _softplus(r):
    return np.logaddexp(0.0, r)


def _softplus_inv(a):
    return a + np.log(-np.expm1(-a))


def unpack(theta, H):
    a = _softplus(theta[:H])
    c = theta[H:2 * H]
    w = softmax(theta[2 * H:])
    return a, c, w


def naf_forward(theta, x, H):
    a, c, w = unpack(theta, H)
    s = expit((x[:, None] - c) * a)
    return s @ w


def naf_residual_jacobian(theta, x, t, H):
    """Residuals ``q(x_i) - t_i`` and their Jacobian in the raw parameters."""
    a, c, w = unpack(theta, H)
    s = expit((x[:, None] - c) * a)
    q = s @ w
    ds = s * (1 - s) * w
    J = np.hstack([
        ds * (x[:, None] - c) * expit(theta[:H]),
        -ds * a,
        w * (s - q[:, None]),
    ])
    return q - t, J


def naf_loss_and_grad(theta, x, t, H):
    """Mean squared error of the flow against the targets, with its gradient."""
    r, J = naf_residual_jacobian(theta, x, t, H)
    n = x.size
    return float(r @ r / n), 2.0 * (J.T @ r) / n


def _tri_ratio(beta, gamma):
    tot = 2 + beta + gamma
    lv = logit(np.array([beta, 1 + beta, 2 + beta]) / tot)
    return (lv[2] - lv[1]) / (lv[1] - lv[0])


def _partition(x, nb):
    """Split sorted knots into at most ``nb`` runs of 1..3 consecutive points.

    Runs are chosen by dynamic programming to avoid grouping points whose
    internal span is large relative to the gaps that separate them from
    their neighbours.
    """
    n = len(x)
    if n <= nb:
        return [[i] for i in range(n)]

    def cost(i, m):
        if m == 1:
            return 0.0
        span = x[i + m - 1] - x[i]
        left = x[i] - x[i - 1] if i > 0 else np.inf
        right = x[i + m] - x[i + m - 1] if i + m < n else np.inf
        c = max(np.log(span / min(left, right)), -3.0) + 3.0
        if m == 3:
            c += 1.0 + 0.5 * np.log((x[i + 2] - x[i + 1]) / (x[i + 1] - x[i])) ** 2
        return c

    f = np.full((n + 1, nb + 1), np.inf)
    f[0, 0] = 0.0
    back = np.zeros((n + 1, nb + 1), dtype=int)
    for i in range(1, n + 1):
        for m in (1, 2, 3):
            if i - m < 0:
                continue
            cand = f[i - m, :-1] + cost(i - m, m)
            better = cand < f[i, 1:]
            f[i, 1:][better] = cand[better]
            back[i, 1:][better] = m
    k = int(np.argmin(f[n]))
    if not np.isfinite(f[n, k]):
        raise ValueError(f"{n} knots cannot be covered by {nb} units")
    blocks = []
    i = n
    while i > 0:
        m = back[i, k]
        blocks.append(list(range(i - m, i)))
        i -= m
        k -= 1
    return blocks[::-1]


def _structured_init(x, H, kappa=3.0):
    """Place each sigmoid on a run of knots so the flow nearly interpolates.

    A run of m knots owns weight (m - 1 + beta + gamma)/(n + 1); beta and
    gamma split the half-steps shared with the neighbouring runs.  The
    sigmoid is logit-linear through the run's targets.
    """
    n = len(x)
    blocks = _partition(x, H)
    nbk = len(blocks)
    beta = np.full(nbk, 0.5)
    gamma = np.full(nbk, 0.5)
    beta[0] = 1.0
    gamma[-1] = 1.0
    for j, blk in enumerate(blocks):
        if len(blk) == 3:
            rho = (x[blk[2]] - x[blk[1]]) / (x[blk[1]] - x[blk[0]])
            b0 = beta[j]
            g_hi = 1.0 if j == nbk - 1 else 0.999

            def fg(g):
                return _tri_ratio(b0, g) - rho

            if fg(g_hi) <= 0 <= fg(1e-9):
                gamma[j] = brentq(fg, 1e-9, g_hi)
            elif j > 0:
                def fb(bb):
                    return _tri_ratio(bb, gamma[j]) - rho

                if fb(1e-9) * fb(beta[j]) < 0:
                    bb = brentq(fb, 1e-9, beta[j])
                    beta[j] = bb
                    gamma[j - 1] = 1 - bb
        if j < nbk - 1:
            beta[j + 1] = 1 - gamma[j]

    a = np.empty(nbk)
    b = np.empty(nbk)
    w = np.empty(nbk)
    for j, blk in enumerate(blocks):
        m = len(blk)
        tot = m - 1 + beta[j] + gamma[j]
        w[j] = tot / (n + 1)
        lv = logit((np.arange(m) + beta[j]) / tot)
        if m == 1:
            i = blk[0]
            d = min(x[i] - x[i - 1] if i > 0 else np.inf,
                    x[i + 1] - x[i] if i < n - 1 else np.inf)
            a[j] = kappa / (d if np.isfinite(d) else 1.0)
        else:
            a[j] = (lv[-1] - lv[0]) / (x[blk[-1]] - x[blk[0]])
        b[j] = lv[0] - a[j] * x[blk[0]]
    if nbk < H:
        # spare units duplicate existing ones and share their weight
        extra = np.arange(H - nbk) % nbk
        counts = np.bincount(np.concatenate([np.arange(nbk), extra]), minlength=nbk)
        w = w / counts
        a = np.concatenate([a, a[extra]])
        b = np.concatenate([b, b[extra]])
        w = np.concatenate([w, w[extra]])
    return np.concatenate([_softplus_inv(a), -b / a, np.log(w / w.sum())])


def _smooth_init(x, H):
    """Evenly spaced sigmoids over the empirical quantiles (fallback start)."""
    n = len(x)
    t = np.arange(1, n + 1) / (n + 1)
    c = np.interp((np.arange(H) + 0.5) / H, t, x)
    spacing = np.maximum(np.gradient(c) if H > 1 else np.ones(1), 1e-6)
    a = 2.0 / spacing
    return np.concatenate([_softplus_inv(a), c, np.full(H, -np.log(H))])


def _lm(theta, x, t, H, iters, tol_lam, patience=50):
    n = x.size
    mu = 1e-8
    lam = np.inf
    it = 0
    best, best_it = np.inf, 0
    for it in range(1, iters + 1):
        r, J = naf_residual_jacobian(theta, x, t, H)
        lam = np.abs(r).max() * (n + 1)
        if lam <= tol_lam:
            return theta, lam, it
        # stop once a local minimum is evident
        if lam < 0.99 * best:
            best, best_it = lam, it
        elif it - best_it >= patience:
            break
        cost = r @ r
        # the n x n system is cheaper than the parameter-space one when n < 3H
        JJ = J @ J.T
        for _ in range(40):
            try:
                step = -J.T @ np.linalg.solve(JJ + mu * np.eye(n), r)
            except np.linalg.LinAlgError:
                mu *= 10
                continue
            r2 = naf_residual_jacobian(theta + step, x, t, H)[0]
            if r2 @ r2 < cost:
                theta = theta + step
                mu = max(mu / 10, 1e-15)
                break
            mu *= 10
        else:
            break
    r = naf_forward(theta, x, H) - t
    return theta, np.abs(r).max() * (n + 1), it


def _adam(theta, x, t, H, iters, lr, tol_lam):
    n = x.size
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    b1, b2, eps = 0.9, 0.999, 1e-8
    lam = np.inf
    it = 0
    for it in range(1, iters + 1):
        r, J = naf_residual_jacobian(theta, x, t, H)
        lam = np.abs(r).max() * (n + 1)
        if lam <= tol_lam:
            return theta, lam, it
        g = 2.0 * (J.T @ r) / n
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta = theta - lr * (m / (1 - b1 ** it)) / (np.sqrt(v / (1 - b2 ** it)) + eps)
    r = naf_forward(theta, x, H) - t
    return theta, np.abs(r).max() * (n + 1), it


class NafMap(MonotoneMap):
    """``q(u) = sum_j w_j sigmoid(a_j ((u - mu)/sd - c_j))``."""

    kind = "naf"
    _chunk = 8192

    def __init__(self, knots, mu, sd, a, c, w, lam, iters, ties=0):
        super().__init__(knots, ties)
        self.mu, self.sd = float(mu), float(sd)
        self.a, self.c, self.w = (np.asarray(v, dtype=np.float64) for v in (a, c, w))
        self.fit_lambda = float(lam)
        self.iters = int(iters)

    def _apply(self, u, fn):
        u = np.asarray(u, dtype=np.float64)
        flat = ((u.reshape(-1) - self.mu) / self.sd)
        out = np.empty(flat.size)
        for lo in range(0, flat.size, self._chunk):
            z = (flat[lo:lo + self._chunk, None] - self.c) * self.a
            out[lo:lo + self._chunk] = fn(expit(z))
        return out.reshape(u.shape)

    def eval(self, u):
        return self._apply(u, lambda s: s @ self.w)

    def derivative(self, u):
        aw = self.a * self.w / self.sd
        return self._apply(u, lambda s: (s * (1 - s)) @ aw)

    def inverse(self, p):
        p = np.asarray(p, dtype=np.float64)
        lo = np.full(p.shape, self.knots[0])
        hi = np.full(p.shape, self.knots[-1] + 1e-9)
        out = bisect_increasing(self.eval, np.clip(p, 1e-300, 1 - 1e-16), lo, hi,
                                xtol=1e-15, ftol=1e-13)
        return np.where(p <= 0, -np.inf, np.where(p >= 1, np.inf, out))

    @property
    def theta_summary(self):
        return {"hidden_units": self.a.size, "lambda": self.fit_lambda, "iters": self.iters}


def fit_naf(scores, config: NafConfig | None = None, *, jitter=None, seed=0) -> NafMap:
    """Fit a single-block sigmoidal flow through ``(u_(i), i/(n+1))``.

    Input slopes are softplus-parameterized and output weights are a softmax,
    so the map is strictly increasing with limits 0 and 1.  Training starts
    from a structured placement of the sigmoids on the knots and runs
    Levenberg-Marquardt (or Adam) on the squared error until the measured
    lambda-accuracy reaches ``config.target_accuracy``.
    """
    config = config or NafConfig()
    raw = np.asarray(scores, dtype=np.float64).reshape(-1)
    # exact duplicates cannot be separated by a strictly increasing map
    has_ties = raw.size > 1 and np.any(np.diff(np.sort(raw)) == 0)
    u, ties = _prepare(raw, has_ties if jitter is None else jitter, seed)
    if ties:
        raise ValueError("NAF needs distinct scores; enable jitter")
    n = u.size
    H = config.hidden_units
    mu = float(u.mean())
    sd = float(u.std()) if n > 1 else 1.0
    sd = sd if sd > 0 else 1.0
    x = (u - mu) / sd
    t = np.arange(1, n + 1) / (n + 1)
    tol = config.target_accuracy

    try:
        theta0 = _structured_init(x, H)
    except ValueError:
        theta0 = _smooth_init(x, H)
    if config.optimizer == "lm":
        theta, lam, iters = _lm(theta0, x, t, H, config.max_iters, tol)
    else:
        theta, lam, iters = _adam(theta0, x, t, H, config.max_iters,
                                  config.learning_rate, tol)
    a, c, w = unpack(theta, H)
    qmap = NafMap(u, mu, sd, a, c, w, lam, iters, ties)
    if lam > tol:
        if config.strict:
            raise NafConvergenceError(lam, iters)
        log.warning("NAF fit stopped at lambda=%.3g (target %.3g)", lam, tol)
    return qmap


def fit_map(kind: str, scores, *, seed=0, naf: NafConfig | None = None,
            jitter=False) -> MonotoneMap:
    if kind == "naive":
        return fit_naive(scores, jitter=jitter, seed=seed)
    if kind == "linear":
        return fit_linear(scores, jitter=jitter, seed=seed)
    if kind == "random":
        return fit_random(scores, seed, jitter=jitter)
    if kind == "naf":
        return fit_naf(scores, naf, jitter=jitter or None, seed=seed)
    raise ValueError(f"unknown interpolator {kind!r}; choose from {', '.join(INTERPOLATORS)}")
