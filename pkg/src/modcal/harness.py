"""Experiment grid runner and report writer.

A config is a flat ``key = value`` text file; list values are comma
separated and ``#`` starts a comment.  The grid is

    datasets x base_kinds x scores x interpolators x seeds

and the unit of parallel work is one (dataset, base kind, seed) triple:
the split, standardization and base training are shared by every
(score, interpolator) cell under it, and nothing mutable crosses units.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .base import parse_kind, train_base
from .conformal import AbsCalibrationScore, AbsResidue, conformal_interval
from .core import SplitSpec, fit_standardizer, split_dataset
from .interp import INTERPOLATORS, NafConfig
from .mcc import ALIASES, recalibrate
from .metrics import MetricRow, evaluate, pit_histogram
from .scores import COMPATIBLE, DEFAULT_FOR_KIND, SCORES, make_score
from .synthetic import GENERATORS, load_dataset, parse_spec

log = logging.getLogger(__name__)

REPORT_COLUMNS = ("dataset", "base", "score", "interp", "seed",
                  "nll", "crps", "std", "ci95", "ece", "pit_ks")
PIT_BINS = 20
NA = "NA"


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


# documented in ``calibrate --help``; (default, description)
CONFIG_KEYS = {
    "datasets": ("hetero", "synthetic specs (name[:n=..][:seed=..][:d=..]) or CSV paths"),
    "base_kinds": ("point,distribution", "point, interval, quantile-K, distribution, ensemble[-K]"),
    "scores": ("auto", "'auto' (one default score per kind) or a list of score names"),
    "interpolators": ("linear", "naive, linear, random, naf, or the aliases isotonic, "
                      "conformal-calibration (which imply the cdf score)"),
    "seeds": ("0", "list of unsigned integers; 'a-b' expands to an inclusive range"),
    "n": ("2000", "default row count for synthetic datasets"),
    "train_frac": ("0.6", "fraction of rows used to train the base predictor"),
    "cal_frac": ("0.2", "fraction of rows used to fit the recalibration map"),
    "test_frac": ("0.2", "fraction of rows used for evaluation"),
    "hidden": ("64", "hidden units per layer of the base MLP"),
    "epochs": ("2000", "full-batch Adam epochs for the base MLP"),
    "lr": ("0.01", "Adam learning rate for the base MLP"),
    "output_dir": ("results", "directory receiving report.csv, report.json, pit_histograms.csv"),
    "threads": ("1", "worker processes; CALIB_THREADS caps this value"),
    "level": ("0.9", "coverage level for 'calibrate intervals'"),
    "naf.hidden_units": ("200", "NAF hidden units"),
    "naf.max_iters": ("5000", "NAF optimizer iterations"),
    "naf.target_accuracy": ("0.001", "required NAF lambda-accuracy"),
    "naf.optimizer": ("lm", "lm or adam"),
    "naf.strict": ("false", "fail the cell when NAF misses its target accuracy"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    datasets: tuple
    base_kinds: tuple
    scores: tuple
    interpolators: tuple
    seeds: tuple
    split: SplitSpec
    output_dir: str = "results"
    naf: NafConfig = field(default_factory=lambda: NafConfig(strict=False))
    n: int = 2000
    hidden: int = 64
    epochs: int = 2000
    lr: float = 1e-2
    threads: int = 1
    level: float = 0.9

    def cells_for_kind(self, kind: str):
        """(score, interpolator) pairs run on one base kind."""
        cat = parse_kind(kind).name
        out = []
        for interp in self.interpolators:
            if interp in ALIASES:
                out.append(ALIASES[interp][0:1] + (interp,))
                continue
            names = (DEFAULT_FOR_KIND[cat],) if self.scores == ("auto",) else self.scores
            out.extend((s, interp) for s in names)
        return out

    def echo(self) -> dict:
        d = {
            "datasets": list(self.datasets),
            "base_kinds": list(self.base_kinds),
            "scores": list(self.scores),
            "interpolators": list(self.interpolators),
            "seeds": list(self.seeds),
            "n": self.n,
            "train_frac": self.split.train_frac,
            "cal_frac": self.split.cal_frac,
            "test_frac": self.split.test_frac,
            "hidden": self.hidden,
            "epochs": self.epochs,
            "lr": self.lr,
            "output_dir": self.output_dir,
            "level": self.level,
        }
        d.update({f"naf.{f.name}": getattr(self.naf, f.name) for f in fields(self.naf)})
        return d


def _split_list(v):
    return tuple(s.strip() for s in v.split(",") if s.strip())


def _parse_seeds(v):
    seeds = []
    for tok in _split_list(v):
        a, dash, b = tok.partition("-")
        try:
            if dash:
                seeds.extend(range(int(a), int(b) + 1))
            else:
                seeds.append(int(tok))
        except ValueError:
            raise ConfigError(f"bad seed {tok!r}") from None
    if not seeds or any(s < 0 for s in seeds):
        raise ConfigError("seeds must be a non-empty list of unsigned integers")
    return tuple(seeds)


def _parse_bool(v):
    low = v.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"bad boolean {v!r}")


def parse_config_text(text: str) -> dict:
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        if key not in CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = val.strip()
    return raw


def build_config(raw: dict) -> ExperimentConfig:
    """Typed, validated config from raw string values (missing keys take defaults)."""
    v = {k: raw.get(k, d) for k, (d, _) in CONFIG_KEYS.items()}
    try:
        kinds = _split_list(v["base_kinds"])
        for k in kinds:
            parse_kind(k)
        split = SplitSpec(float(v["train_frac"]), float(v["cal_frac"]), float(v["test_frac"]))
        naf = NafConfig(
            hidden_units=int(v["naf.hidden_units"]),
            max_iters=int(v["naf.max_iters"]),
            target_accuracy=float(v["naf.target_accuracy"]),
            optimizer=v["naf.optimizer"],
            strict=_parse_bool(v["naf.strict"]),
        )
        cfg = ExperimentConfig(
            datasets=_split_list(v["datasets"]),
            base_kinds=kinds,
            scores=_split_list(v["scores"]),
            interpolators=_split_list(v["interpolators"]),
            seeds=_parse_seeds(v["seeds"]),
            split=split,
            output_dir=v["output_dir"],
            naf=naf,
            n=int(v["n"]),
            hidden=int(v["hidden"]),
            epochs=int(v["epochs"]),
            lr=float(v["lr"]),
            threads=int(v["threads"]),
            level=float(v["level"]),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig):
    for name in ("datasets", "base_kinds", "scores", "interpolators"):
        if not getattr(cfg, name):
            raise ConfigError(f"{name} must not be empty")
    for spec in cfg.datasets:
        name, opts = parse_spec(spec)
        if name not in GENERATORS and not Path(spec).exists():
            raise ConfigError(f"unknown dataset {spec!r} (not a generator or an existing file)")
        if name in GENERATORS and set(opts) - {"n", "seed", "d"}:
            raise ConfigError(f"unknown options in dataset {spec!r}")
    for interp in cfg.interpolators:
        if interp not in INTERPOLATORS and interp not in ALIASES:
            raise ConfigError(f"unknown interpolator {interp!r}")
    if cfg.scores != ("auto",):
        for s in cfg.scores:
            if s not in SCORES:
                raise ConfigError(f"unknown score {s!r}")
    for kind in cfg.base_kinds:
        cat = parse_kind(kind).name
        for score, _ in cfg.cells_for_kind(kind):
            if cat not in COMPATIBLE[score]:
                raise ConfigError(f"score {score!r} is incompatible with base kind {kind!r}")
    if cfg.n < 10 or cfg.hidden < 1 or cfg.epochs < 1 or cfg.threads < 1:
        raise ConfigError("n >= 10, hidden >= 1, epochs >= 1 and threads >= 1 are required")
    if not 0 < cfg.level < 1:
        raise ConfigError("level must lie in (0, 1)")


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return build_config(parse_config_text(text))


def worker_count(cfg: ExperimentConfig) -> int:
    cap = os.environ.get("CALIB_THREADS")
    n = cfg.threads
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ConfigError(f"CALIB_THREADS must be an integer, got {cap!r}") from None
    return n


# ------------------------------------------------------------ running

@dataclass(frozen=True)
class CellResult:
    dataset: str
    base: str
    score: str
    interp: str
    seed: int
    metrics: MetricRow | None = None
    pit_counts: tuple | None = None
    error: str | None = None

    @property
    def ok(self):
        return self.error is None


def _prepare_unit(cfg, dataset, kind, seed):
    data = load_dataset(dataset, default_n=cfg.n)
    train, cal, test = split_dataset(data, replace(cfg.split, seed=seed))
    st = fit_standardizer(train)
    train, cal, test = st.apply(train), st.apply(cal), st.apply(test)
    base = train_base(train, kind, hidden=cfg.hidden, epochs=cfg.epochs, lr=cfg.lr, seed=seed)
    return base, cal, test


def _run_unit(args):
    cfg, dataset, kind, seed = args
    cells = cfg.cells_for_kind(kind)
    try:
        base, cal, test = _prepare_unit(cfg, dataset, kind, seed)
    except Exception as exc:  # a failed unit fails all its cells
        msg = f"{type(exc).__name__}: {exc}"
        return [CellResult(dataset, kind, s, i, seed, error=msg) for s, i in cells]
    out = []
    for score, interp in cells:
        try:
            # aliases carry their own interpolator
            method = ALIASES[interp][1] if interp in ALIASES else interp
            H = recalibrate(base, make_score(score), method, cal, seed=seed, naf=cfg.naf)
            row, pits = evaluate(H.distribution(test.features), test.labels, seed=seed)
            counts = tuple(int(c) for c in pit_histogram(pits, PIT_BINS))
            out.append(CellResult(dataset, kind, score, interp, seed, row, counts))
        except Exception as exc:
            out.append(CellResult(dataset, kind, score, interp, seed,
                                  error=f"{type(exc).__name__}: {exc}"))
    return out


def _units(cfg):
    return [(cfg, d, k, s) for d in cfg.datasets for k in cfg.base_kinds for s in cfg.seeds]


def _map_units(fn, units, workers):
    if workers <= 1 or len(units) <= 1:
        return [fn(u) for u in units]
    with ProcessPoolExecutor(max_workers=min(workers, len(units))) as pool:
        # map preserves submission order, so scheduling cannot reorder rows
        return list(pool.map(fn, units))


@dataclass(frozen=True)
class ExperimentReport:
    config: dict
    rows: tuple

    @property
    def failures(self):
        return [r for r in self.rows if not r.ok]

    def aggregates(self):
        """Mean and standard error over seeds per (dataset, base, score, interp)."""
        groups = {}
        for r in self.rows:
            if r.ok:
                groups.setdefault((r.dataset, r.base, r.score, r.interp), []).append(r.metrics)
        out = []
        for key, ms in groups.items():
            entry = dict(zip(("dataset", "base", "score", "interp"), key), count=len(ms))
            for f in fields(MetricRow):
                vals = [getattr(m, f.name) for m in ms]
                if any(x is None for x in vals):
                    entry[f.name] = {"mean": NA, "se": NA}
                    continue
                a = np.asarray(vals, dtype=np.float64)
                se = float(a.std(ddof=1) / math.sqrt(a.size)) if a.size > 1 else 0.0
                entry[f.name] = {"mean": float(a.mean()), "se": se}
            out.append(entry)
        return out

    def to_dict(self):
        rows = []
        for r in self.rows:
            d = {"dataset": r.dataset, "base": r.base, "score": r.score,
                 "interp": r.interp, "seed": r.seed, "error": r.error,
                 "metrics": None, "pit_counts": None}
            if r.ok:
                d["metrics"] = {k: (NA if v is None else v) for k, v in r.metrics.to_dict().items()}
                d["pit_counts"] = list(r.pit_counts)
            rows.append(d)
        return {"config": self.config, "rows": rows, "aggregates": self.aggregates()}

    @classmethod
    def from_dict(cls, d):
        rows = []
        for r in d["rows"]:
            metrics = None
            if r["metrics"] is not None:
                metrics = MetricRow(**{k: (None if v == NA else v) for k, v in r["metrics"].items()})
            counts = None if r["pit_counts"] is None else tuple(r["pit_counts"])
            rows.append(CellResult(r["dataset"], r["base"], r["score"], r["interp"],
                                   r["seed"], metrics, counts, r["error"]))
        return cls(d["config"], tuple(rows))


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> ExperimentReport:
    """Run every grid cell; per-cell failures are recorded, not raised."""
    workers = worker_count(cfg) if workers is None else workers
    results = _map_units(_run_unit, _units(cfg), workers)
    rows = tuple(r for unit in results for r in unit)
    for r in rows:
        if not r.ok:
            log.warning("cell %s/%s/%s/%s seed %d failed: %s",
                        r.dataset, r.base, r.score, r.interp, r.seed, r.error)
    return ExperimentReport(cfg.echo(), rows)


def _fmt(v):
    return NA if v is None else repr(float(v))


def emit_report(report: ExperimentReport, output_dir=None, formats=("csv", "json")):
    """Write report.csv, report.json and pit_histograms.csv; returns the paths."""
    if not report.rows:
        raise ValueError("report has no rows")
    out = Path(output_dir if output_dir is not None else report.config["output_dir"])
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        if "csv" in formats:
            path = out / "report.csv"
            with path.open("w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(REPORT_COLUMNS + ("error",))
                for r in report.rows:
                    head = [r.dataset, r.base, r.score, r.interp, r.seed]
                    if r.ok:
                        m = r.metrics
                        vals = [_fmt(x) for x in (m.nll, m.crps, m.std, m.ci95_width,
                                                   m.ece, m.pit_ks)]
                        w.writerow(head + vals + [""])
                    else:
                        w.writerow(head + [NA] * 6 + [r.error])
            written.append(path)
            path = out / "pit_histograms.csv"
            with path.open("w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["dataset", "base", "score", "interp", "seed"]
                           + [f"bin_{j:02d}" for j in range(PIT_BINS)])
                for r in report.rows:
                    if r.ok:
                        w.writerow([r.dataset, r.base, r.score, r.interp, r.seed,
                                    *r.pit_counts])
            written.append(path)
        if "json" in formats:
            path = out / "report.json"
            path.write_text(json.dumps(report.to_dict(), indent=2) + "\n")
            written.append(path)
    except OSError as exc:
        raise OSError(f"failed writing report to {out}: {exc}") from exc
    return written


def read_report(path) -> ExperimentReport:
    return ExperimentReport.from_dict(json.loads(Path(path).read_text()))


# ------------------------------------------------------------ intervals

def _nonconformity(base, kind):
    cat = parse_kind(kind).name
    score = make_score(DEFAULT_FOR_KIND[cat])
    if cat == "point":
        return AbsResidue(lambda X: base.predict(X).value)
    center = 0.5 if score.name in ("interval", "quantile", "cdf") else 0.0
    return AbsCalibrationScore(base, score, center)


def _interval_unit(args):
    cfg, dataset, kind, seed, c = args
    base, cal, test = _prepare_unit(cfg, dataset, kind, seed)
    y = test.labels
    L, U = conformal_interval(_nonconformity(base, kind), cal, test.features, c)
    H = recalibrate(base, DEFAULT_FOR_KIND[parse_kind(kind).name], "linear", cal, seed=seed)
    lo, hi = H.distribution(test.features).credible_interval(c)
    return (float(np.mean(U - L)), float(np.mean((y >= L) & (y <= U))),
            float(np.mean(hi - lo)), float(np.mean((y >= lo) & (y <= hi))))


def run_interval_comparison(cfg: ExperimentConfig, c: float | None = None,
                            workers: int | None = None):
    """Per (dataset, base kind): mean width and coverage of conformal and
    credible intervals, averaged over seeds."""
    c = cfg.level if c is None else c
    if not 0 < c < 1:
        raise ConfigError("level must lie in (0, 1)")
    workers = worker_count(cfg) if workers is None else workers
    units = [(cfg, d, k, s, c) for d in cfg.datasets for k in cfg.base_kinds for s in cfg.seeds]
    res = _map_units(_interval_unit, units, workers)
    table = []
    per = len(cfg.seeds)
    for i in range(0, len(res), per):
        a = np.asarray(res[i:i + per])
        _, d, k, _, _ = units[i]
        cw, cc, bw, bc = a.mean(axis=0)
        table.append({"dataset": d, "base": k, "level": c, "seeds": per,
                      "conformal_width": float(cw), "conformal_coverage": float(cc),
                      "credible_width": float(bw), "credible_coverage": float(bc),
                      "width_ratio": float(cw / bw)})
    return table


def emit_interval_table(table, output_dir):
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "intervals.csv"
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(table[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(table)
    return path
