"""Acceptance checks shared by ``calibrate check`` and the test suite.

Each ``criterion_k`` returns a :class:`CriterionResult`; nothing here
raises on a failed check.  Marginal guarantees (calibration bound,
conformal coverage) hold over the draw of the calibration set, so those
checks redraw a fresh calibration set for every test point.
"""

from __future__ import annotations

import math
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .base import KindSpec, fit_ols, init_params, loss_and_grad, train_base
from .conformal import AbsResidue, theorem2_deviations, threshold_rank
from .core import Point
from .harness import (build_config, emit_report, parse_config_text, run_experiment,
                      run_interval_comparison)
from .interp import (NafConfig, NafConvergenceError, PiecewiseLinearMap, fit_linear,
                     fit_naf, lambda_accuracy, naf_loss_and_grad)
from .kernels import replicated_linear_pit
from .mcc import RecalibratedDistribution, recalibrate
from .metrics import DEFAULT_LEVELS, crps_closed_form, crps_quadrature, ks_uniformity
from .scores import make_score
from .synthetic import GENERATORS


@dataclass(frozen=True)
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self):
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] criterion {self.number}: {self.name}: {self.detail} ({self.seconds:.1f}s)"


def _timed(number, name, fn):
    t0 = time.perf_counter()
    passed, detail = fn()
    return CriterionResult(number, name, bool(passed), detail, time.perf_counter() - t0)


# ------------------------------------------------------------ helpers

def _small_point_base(seed=0):
    data = GENERATORS["hetero"].sample(2000, seed=seed)
    return train_base(data, "point", hidden=16, epochs=300, seed=seed)


def _fresh_residues(base, rows, seed, gen="hetero"):
    g = GENERATORS[gen]
    rng = np.random.default_rng(seed)
    X = g.features(rows, rng, g.d)
    y = g.draw_labels(X, rng)
    return y - base.predict(X).value


def replicated_pits(base, n, m, seed=0, chunk=None):
    """PIT of m test points, each under a linear map fitted to its own fresh
    calibration set of n residues."""
    chunk = chunk or max(1, 2_000_000 // (n + 1))
    out = []
    done = 0
    k = 0
    while done < m:
        R = min(chunk, m - done)
        r = _fresh_residues(base, R * (n + 1), seed=(seed, k)).reshape(R, n + 1)
        S = np.sort(r[:, :n], axis=1)
        out.append(replicated_linear_pit(S, r[:, n]))
        done += R
        k += 1
    return np.concatenate(out)


def replicated_conformal_coverage(base, n, m, c, seed=0, chunk=None):
    """Fraction of test points inside the conformal set built from their own
    fresh calibration set of |residue| scores."""
    chunk = chunk or max(1, 2_000_000 // (n + 1))
    k_rank = threshold_rank(n, c)
    hits = 0
    done = 0
    k = 0
    while done < m:
        R = min(chunk, m - done)
        r = np.abs(_fresh_residues(base, R * (n + 1), seed=(seed, k))).reshape(R, n + 1)
        if k_rank > n:
            hits += R
        else:
            T = np.partition(r[:, :n], k_rank - 1, axis=1)[:, k_rank - 1]
            hits += int(np.sum(r[:, n] < T))
        done += R
        k += 1
    return hits / m


def coverage_deviation(pits, levels=DEFAULT_LEVELS):
    p = np.sort(pits)
    return float(np.max(np.abs(np.searchsorted(p, levels, side="right") / p.size - levels)))


# ------------------------------------------------------------ criteria

def criterion_1(m=100_000, sizes=(19, 99, 499), seed=0):
    def run():
        base = _small_point_base(seed)
        parts, ok = [], True
        for n in sizes:
            dev = coverage_deviation(replicated_pits(base, n, m, seed=seed + n))
            bound = 1 / (n + 1) + 3 * math.sqrt(0.25 / m)
            ok &= dev <= bound
            parts.append(f"n={n} dev={dev:.4f} bound={bound:.4f}")
        return ok, "; ".join(parts)
    return _timed(1, "calibration bound, linear map", run)


def _hetero_config(**over):
    text = {
        "datasets": "hetero:n=8000",
        "base_kinds": "point,interval,quantile-4,distribution,ensemble",
        "interpolators": "linear",
        "seeds": "0-7",
        "train_frac": "0.25",
        "cal_frac": "0.25",
        "test_frac": "0.5",
        "hidden": "32",
        "epochs": "400",
    }
    text.update(over)
    return build_config(text)


def criterion_2(seeds="0-7"):
    def run():
        cfg = _hetero_config(seeds=seeds)
        rep = run_experiment(cfg)
        if rep.failures:
            return False, f"{len(rep.failures)} cells failed: {rep.failures[0].error}"
        ok, parts = True, []
        for agg in rep.aggregates():
            e = agg["ece"]["mean"]
            ok &= e <= 0.01
            parts.append(f"{agg['base']}={e:.4f}")
        return ok, "mean debiased ECE " + ", ".join(parts) + " (limit 0.01)"
    return _timed(2, "debiased ECE after recalibration", run)


def criterion_3(m=100_000, n=99, levels=(0.5, 0.8, 0.9), seed=0):
    def run():
        base = _small_point_base(seed)
        ok, parts = True, []
        for c in levels:
            cov = replicated_conformal_coverage(base, n, m, c, seed=seed + int(100 * c))
            slack = 1 / n + 3 * math.sqrt(c * (1 - c) / m)
            ok &= abs(cov - c) <= slack
            parts.append(f"c={c} coverage={cov:.4f} tol={slack:.4f}")
        return ok, "; ".join(parts)
    return _timed(3, "conformal coverage", run)


def interval_deviation_table(sizes=(19, 99), levels=(0.5, 0.9), m=1000, seed=0):
    """Deviations ``H(U) - H(L) - c`` for each (n, c)."""
    base = _small_point_base(seed)
    phi = AbsResidue(lambda X: base.predict(X).value)
    g = GENERATORS["hetero"]
    out = {}
    for n in sizes:
        cal = g.sample(n, seed=seed + 7 * n)
        test = g.sample(m, seed=seed + 11 * n + 1)
        for c in levels:
            out[(n, c)] = theorem2_deviations(phi, cal, test, c)
    return out


def corrected_bound_holds(dev, n, c, atol=1e-6):
    """``H(U) - H(L)`` lies in ``(m/(n+1), (m+1)/(n+1)]`` with ``m = floor(c n)``,
    so the deviation from c lies in ``(-(1+c)/(n+1), (1-c)/(n+1)]``."""
    return bool(np.all(dev > -(1 + c) / (n + 1) - atol) and np.all(dev <= (1 - c) / (n + 1) + atol))


def criterion_4(seed=0):
    def run():
        ok, corrected, parts = True, True, []
        for (n, c), dev in interval_deviation_table(seed=seed).items():
            worst = float(np.max(np.abs(dev)))
            bound = (1 - c) / (n + 1) + 1e-6
            ok &= worst <= bound
            corrected &= corrected_bound_holds(dev, n, c)
            parts.append(f"n={n} c={c} max|dev|={worst:.5f} bound={bound:.5f}")
        parts.append(f"corrected interval (-(1+c)/(n+1), (1-c)/(n+1)] holds: {corrected}")
        return ok, "; ".join(parts)
    return _timed(4, "conformal/credible interval equivalence", run)


def criterion_5(seed=0, naf_sizes=(10, 50, 100, 200, 300, 400, 500)):
    def run():
        rng = np.random.default_rng(seed)
        worst_lin = 0.0
        for _ in range(100):
            s = rng.normal(size=int(rng.integers(1, 501)))
            worst_lin = max(worst_lin, lambda_accuracy(fit_linear(s), s))
        ok = worst_lin <= 1e-12
        parts = [f"linear max lambda={worst_lin:.1e}"]
        cfg = NafConfig(hidden_units=200, strict=False)
        for n in naf_sizes:
            s = rng.normal(size=n)
            try:
                lam = fit_naf(s, cfg, seed=seed).fit_lambda
            except NafConvergenceError as exc:
                lam = exc.lam
            ok &= lam <= 1e-3
            parts.append(f"naf n={n} lambda={lam:.1e}")
        return ok, "; ".join(parts)
    return _timed(5, "lambda-accuracy contracts", run)


def criterion_6(sizes=(100, 1000, 10_000), m=100_000, seed=0):
    def run():
        g = GENERATORS["linear-gauss"]
        base = fit_ols(g.sample(1000, seed=seed))
        test = g.sample(m, seed=seed + 1)
        ks = []
        for n in sizes:
            cal = g.sample(n, seed=seed + 2 + n)
            H = recalibrate(base, "residue", "linear", cal)
            ks.append(ks_uniformity(H.distribution(test.features).cdf(test.labels)))
        mono = all(a > b for a, b in zip(ks, ks[1:]))
        ok = mono and ks[-1] < 0.02
        vals = ", ".join(f"n={n}: {k:.4f}" for n, k in zip(sizes, ks))
        return ok, f"KS {vals}; decreasing={mono}"
    return _timed(6, "oracle equivalence on linear-gauss", run)


def random_pwl_distribution(rng):
    """A random piecewise-linear CDF over an affine (residue) score."""
    n = int(rng.integers(2, 30))
    xs = np.sort(rng.normal(size=n) * rng.uniform(0.2, 3.0))
    xs = xs + np.arange(n) * 1e-3
    vs = np.sort(rng.uniform(0.01, 0.99, n))
    vs[0], vs[-1] = min(vs[0], 0.05), max(vs[-1], 0.95)
    qmap = PiecewiseLinearMap(xs, xs, vs, float(rng.uniform(0.1, 2.0)))
    pred = Point(rng.normal(size=5))
    return RecalibratedDistribution(pred, make_score("residue"), qmap)


def criterion_7(trials=100, seed=0):
    def run():
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(trials):
            dist = random_pwl_distribution(rng)
            y = dist.pred.value + rng.normal(size=dist.size) * 2
            worst = max(worst, float(np.max(np.abs(
                crps_closed_form(dist, y) - crps_quadrature(dist, y)))))
        unif = PiecewiseLinearMap(np.array([0.0, 1.0]), np.array([0.0, 1.0]),
                                  np.array([0.0, 1.0]), 1.0)
        d = RecalibratedDistribution(Point(np.zeros(1)), make_score("residue"), unif)
        err = abs(float(crps_closed_form(d, [0.5])[0]) - 1 / 12)
        return worst <= 1e-6 and err <= 1e-9, (
            f"max closed/quadrature gap={worst:.1e} (limit 1e-6); "
            f"uniform CRPS error={err:.1e} (limit 1e-9)")
    return _timed(7, "CRPS closed form vs quadrature", run)


def _fd_rel_error(f, theta, grad, rng, probes=20, h=1e-6):
    """Worst relative gap between analytic and central-difference directional
    derivatives along random directions."""
    worst = 0.0
    for _ in range(probes):
        v = rng.normal(size=theta.size)
        fd = (f(theta + h * v) - f(theta - h * v)) / (2 * h)
        an = float(grad @ v)
        worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-8))
    return worst


def gradient_errors(seed=0):
    rng = np.random.default_rng(seed)
    errs = {}
    H = 6
    x = np.sort(rng.normal(size=12))
    t = (np.arange(1, 13)) / 13
    theta = rng.normal(size=3 * H) * 0.5
    _, g = naf_loss_and_grad(theta, x, t, H)
    errs["naf"] = _fd_rel_error(lambda th: naf_loss_and_grad(th, x, t, H)[0], theta, g, rng)
    X = rng.normal(size=(15, 2))
    y = rng.normal(size=15)
    for kind in (KindSpec("point"), KindSpec("interval"), KindSpec("quantile", 4),
                 KindSpec("distribution")):
        params = init_params(2, 5, kind.net_out, rng)
        shapes = [p.shape for p in params]
        sizes = [p.size for p in params]

        def unflat(v):
            out, i = [], 0
            for sh, sz in zip(shapes, sizes):
                out.append(v[i:i + sz].reshape(sh))
                i += sz
            return out

        flat = np.concatenate([p.ravel() for p in params])
        _, grads = loss_and_grad(params, X, y, kind)
        gflat = np.concatenate([q.ravel() for q in grads])
        errs[kind.label] = _fd_rel_error(
            lambda v: loss_and_grad(unflat(v), X, y, kind)[0], flat, gflat, rng)
    return errs


def criterion_8(seed=0):
    def run():
        errs = gradient_errors(seed)
        worst = max(errs.values())
        return worst <= 1e-4, ", ".join(f"{k}={v:.1e}" for k, v in errs.items()) + " (limit 1e-4)"
    return _timed(8, "gradient checks", run)


def criterion_9(seeds="0-3"):
    def run():
        cfg = _hetero_config(datasets="hetero:n=20000", base_kinds="point,quantile-4,distribution",
                             seeds=seeds, train_frac="0.2", cal_frac="0.3", test_frac="0.5",
                             epochs="300")
        ok, parts = True, []
        for row in run_interval_comparison(cfg, c=0.9):
            cc, bc, ratio = row["conformal_coverage"], row["credible_coverage"], row["width_ratio"]
            ok &= abs(cc - 0.9) <= 0.01 and abs(bc - 0.9) <= 0.01 and ratio <= 1.05
            parts.append(f"{row['base']}: conformal={cc:.4f} credible={bc:.4f} ratio={ratio:.3f}")
        return ok, "; ".join(parts)
    return _timed(9, "interval comparison", run)


DETERMINISM_CONFIG = """\
datasets = hetero:n=400, skew:n=400
base_kinds = point, distribution
interpolators = linear, random
seeds = 0-1
hidden = 8
epochs = 100
"""


def criterion_10():
    def run():
        with tempfile.TemporaryDirectory() as tmp:
            blobs = []
            for run_id in range(2):
                out = Path(tmp) / f"run{run_id}"
                raw = parse_config_text(DETERMINISM_CONFIG)
                raw["output_dir"] = str(Path(tmp) / "out")
                rep = run_experiment(build_config(raw))
                emit_report(rep, out)
                blobs.append((out / "report.json").read_bytes())
        same = blobs[0] == blobs[1]
        return same, f"report.json identical across runs: {same} ({len(blobs[0])} bytes)"
    return _timed(10, "determinism of report.json", run)


CRITERIA = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
    6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10,
}


def run_all(selected=None, echo=None):
    results = []
    for k in sorted(selected or CRITERIA):
        r = CRITERIA[k]()
        if echo is not None:
            echo(r.line())
        results.append(r)
    return results
