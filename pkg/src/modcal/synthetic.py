"""Built-in synthetic regression datasets with known conditional laws."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import special, stats

from .core import Dataset, read_csv


def _beta(d):
    # fixed coefficients so the oracle CDF does not depend on the seed
    return np.array([(-1.0) ** k / (k + 1) for k in range(d)])


@dataclass(frozen=True)
class Generator:
    name: str
    description: str
    d: int = 1

    def features(self, n, rng, d):
        raise NotImplementedError

    def sample(self, n=2000, seed=0, d=None) -> Dataset:
        d = self.d if d is None else int(d)
        rng = np.random.default_rng(seed)
        X = self.features(n, rng, d)
        y = self.draw_labels(X, rng)
        # independent draws must not look like the same rows to provenance checks
        return Dataset(X, y, name=f"{self.name}:n={n}:seed={seed}")

    def draw_labels(self, X, rng):
        raise NotImplementedError

    def true_cdf(self, X, y):
        raise NotImplementedError


class LinearGauss(Generator):
    sigma = 1.0

    def features(self, n, rng, d):
        return rng.standard_normal((n, d))

    def draw_labels(self, X, rng):
        return X @ _beta(X.shape[1]) + self.sigma * rng.standard_normal(X.shape[0])

    def true_cdf(self, X, y):
        X = np.atleast_2d(X)
        return special.ndtr((y - X @ _beta(X.shape[1])) / self.sigma)


class Hetero(Generator):
    def features(self, n, rng, d):
        return rng.uniform(-2.0, 2.0, (n, d))

    def draw_labels(self, X, rng):
        x1 = X[:, 0]
        return np.sin(2 * x1) + (0.2 + 0.5 * np.abs(x1)) * rng.standard_normal(x1.size)

    def true_cdf(self, X, y):
        x1 = np.atleast_2d(X)[:, 0]
        return special.ndtr((y - np.sin(2 * x1)) / (0.2 + 0.5 * np.abs(x1)))


class Skew(Generator):
    log_sigma = 0.75

    def features(self, n, rng, d):
        return rng.uniform(-2.0, 2.0, (n, d))

    def draw_labels(self, X, rng):
        return X[:, 0] + rng.lognormal(0.0, self.log_sigma, X.shape[0])

    def true_cdf(self, X, y):
        x1 = np.atleast_2d(X)[:, 0]
        return stats.lognorm.cdf(y - x1, s=self.log_sigma)


GENERATORS = {
    "linear-gauss": LinearGauss("linear-gauss", "y = b'x + N(0, 1), x ~ N(0, I_d), d = 3", d=3),
    "hetero": Hetero("hetero", "y = sin(2 x1) + (0.2 + 0.5 |x1|) N(0, 1), x ~ U(-2, 2)^d", d=1),
    "skew": Skew("skew", "y = x1 + LogNormal(0, 0.75), x ~ U(-2, 2)^d", d=1),
}


def parse_spec(spec: str) -> tuple[str, dict]:
    """``"name:key=value:key=value"`` into a name and keyword dict."""
    name, *parts = spec.strip().split(":")
    opts = {}
    for part in parts:
        key, sep, val = part.partition("=")
        if not sep:
            raise ValueError(f"bad dataset option {part!r} in {spec!r}")
        opts[key.strip()] = val.strip()
    return name.strip(), opts


def load_dataset(spec: str, default_n: int = 2000) -> Dataset:
    """Build a synthetic dataset from its spec or read a CSV file."""
    name, opts = parse_spec(spec)
    if name in GENERATORS:
        unknown = set(opts) - {"n", "seed", "d"}
        if unknown:
            raise ValueError(f"unknown options {sorted(unknown)} for {name}")
        gen = GENERATORS[name]
        ds = gen.sample(int(opts.get("n", default_n)), int(opts.get("seed", 0)),
                        opts.get("d"))
        return Dataset(ds.features, ds.labels, name=spec.strip())
    path = Path(spec.strip())
    if path.suffix.lower() == ".csv" or path.exists():
        return read_csv(path)
    raise ValueError(
        f"unknown dataset {spec!r}; built-ins are {', '.join(GENERATORS)} or a CSV path"
    )
