import numpy as np
import pytest

from modcal.base import (DivergenceError, KindSpec, cumulative_quantiles, fit_ols,
                         gaussian_nll_grad, gaussian_nll_loss, init_params, loss_and_grad,
                         parse_kind, pinball_loss, predict, train_base)
from modcal.core import Dataset, Ensemble, Gaussian, Interval, Point, Quantiles


class TestParseKind:
    @pytest.mark.parametrize("text, name, K, out", [
        ("point", "point", 1, 1),
        ("interval", "interval", 1, 2),
        ("distribution", "distribution", 1, 2),
        ("quantile-4", "quantile", 4, 4),
        ("ensemble", "ensemble", 5, 10),
        ("ensemble-3", "ensemble", 3, 6),
    ])
    def test_valid(self, text, name, K, out):
        k = parse_kind(text)
        assert (k.name, k.K, k.out_dim) == (name, K, out)

    @pytest.mark.parametrize("text", ["quantile", "quantile-0", "gauss", "ensemble-x"])
    def test_invalid(self, text):
        with pytest.raises(ValueError):
            parse_kind(text)

    def test_quantile_levels(self):
        np.testing.assert_allclose(parse_kind("quantile-4").levels, [0.125, 0.375, 0.625, 0.875])


class TestLosses:
    @pytest.mark.parametrize("q, y, expected", [(0.0, 1.0, 0.9), (1.0, 0.0, 0.1), (0.4, 0.4, 0.0)])
    def test_pinball(self, q, y, expected):
        assert pinball_loss(q, y, 0.9) == pytest.approx(expected)

    @pytest.mark.parametrize("y, expected", [(0.0, 0.9189385), (1.0, 1.4189385)])
    def test_nll(self, y, expected):
        assert gaussian_nll_loss(0.0, 1.0, y) == pytest.approx(expected, abs=1e-7)

    def test_nll_rejects_nonpositive_std(self):
        with pytest.raises(ValueError):
            gaussian_nll_loss(0.0, 0.0, 1.0)

    def test_nll_gradient(self):
        m, s, y = 0.3, 0.7, 1.1
        gm, gs = gaussian_nll_grad(m, s, y)
        h = 1e-6
        fm = (gaussian_nll_loss(m + h, s, y) - gaussian_nll_loss(m - h, s, y)) / (2 * h)
        fs = (gaussian_nll_loss(m, s + h, y) - gaussian_nll_loss(m, s - h, y)) / (2 * h)
        assert gm == pytest.approx(fm, rel=1e-6)
        assert gs == pytest.approx(fs, rel=1e-6)


def _flat(params):
    return np.concatenate([p.ravel() for p in params])


def _unflat(v, like):
    out, i = [], 0
    for p in like:
        out.append(v[i:i + p.size].reshape(p.shape))
        i += p.size
    return out


@pytest.mark.parametrize("kind", [KindSpec("point"), KindSpec("interval"),
                                  KindSpec("quantile", 3), KindSpec("distribution")])
def test_backprop_matches_fd(kind, rng):
    X = rng.normal(size=(12, 3))
    y = rng.normal(size=12)
    params = init_params(3, 5, kind.net_out, rng)
    _, grads = loss_and_grad(params, X, y, kind)
    g = _flat(grads)
    theta = _flat(params)
    h = 1e-6
    for j in range(theta.size):
        e = np.zeros_like(theta)
        e[j] = h
        fd = (loss_and_grad(_unflat(theta + e, params), X, y, kind)[0]
              - loss_and_grad(_unflat(theta - e, params), X, y, kind)[0]) / (2 * h)
        assert abs(fd - g[j]) <= 1e-5 * max(abs(fd), abs(g[j])) + 1e-9


class TestTraining:
    def test_point_on_linear_data(self):
        x = np.linspace(-1, 1, 200)
        ds = Dataset(x, 2 * x)
        f = train_base(ds, "point")  # default 64 units, 2000 epochs
        xt = np.linspace(-0.9, 0.9, 50)
        mse = np.mean((f.predict(xt[:, None]).value - 2 * xt) ** 2)
        assert mse <= 1e-3
        assert f.meta[0].final_loss <= f.meta[0].initial_loss

    def test_gaussian_std(self, rng):
        ds = Dataset(rng.normal(size=(2000, 1)), rng.normal(size=2000))
        f = train_base(ds, "distribution", hidden=8, epochs=400)
        std = f.predict(rng.normal(size=(200, 1))).scale
        assert 0.9 <= std.mean() <= 1.1
        assert np.all(std > 0)

    def test_quantile_two_levels(self, rng):
        ds = Dataset(rng.normal(size=(4000, 1)), rng.uniform(size=4000))
        f = train_base(ds, "quantile-2", hidden=8, epochs=600)
        q = f.predict(rng.normal(size=(200, 1))).values.mean(axis=0)
        np.testing.assert_allclose(q, [0.25, 0.75], atol=0.03)

    def test_quantiles_non_decreasing(self, rng):
        ds = Dataset(rng.normal(size=(100, 2)), rng.normal(size=100))
        f = train_base(ds, "quantile-5", hidden=8, epochs=50)
        v = f.predict(rng.normal(size=(1000, 2)) * 3).values
        assert np.all(np.diff(v, axis=1) >= 0)

    def test_interval_ordered(self, rng):
        x = rng.uniform(-2, 2, size=500)
        ds = Dataset(x, np.sin(x) + 0.3 * rng.normal(size=500))
        f = train_base(ds, "interval", hidden=8, epochs=200)
        out = f.predict(rng.uniform(-3, 3, size=(1000, 1)))
        assert isinstance(out, Interval) and np.all(out.lo < out.hi)

    def test_ensemble_members(self, rng):
        ds = Dataset(rng.normal(size=(50, 1)), rng.normal(size=50))
        f = train_base(ds, "ensemble-3", hidden=4, epochs=20)
        out = f.predict(np.zeros((2, 1)))
        assert isinstance(out, Ensemble) and len(out.members) == 3
        assert len({m.seed for m in f.meta}) == 3

    def test_seed_determinism(self, rng):
        ds = Dataset(rng.normal(size=(60, 2)), rng.normal(size=60))
        a = train_base(ds, "distribution", hidden=6, epochs=30, seed=4)
        b = train_base(ds, "distribution", hidden=6, epochs=30, seed=4)
        for pa, pb in zip(a.nets[0], b.nets[0]):
            np.testing.assert_array_equal(pa, pb)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_detected(self, rng):
        ds = Dataset(rng.normal(size=(20, 1)), rng.normal(size=20) * 1e200)
        with pytest.raises(DivergenceError):
            train_base(ds, "point", hidden=4, epochs=5, lr=1e10)

    def test_feature_count_checked(self, rng):
        ds = Dataset(rng.normal(size=(20, 2)), rng.normal(size=20))
        f = train_base(ds, "point", hidden=4, epochs=5)
        with pytest.raises(ValueError, match="features"):
            predict(f, np.zeros((1, 3)))

    @pytest.mark.parametrize("kind, cls", [("point", Point), ("distribution", Gaussian),
                                           ("quantile-3", Quantiles)])
    def test_output_variants(self, kind, cls, rng):
        ds = Dataset(rng.normal(size=(20, 1)), rng.normal(size=20))
        assert isinstance(train_base(ds, kind, hidden=4, epochs=5).predict(np.zeros((3, 1))), cls)


def test_cumulative_quantiles():
    raw = np.array([[0.0, -50.0, 0.0]])
    q = cumulative_quantiles(raw)
    assert q[0, 0] == 0.0 and np.all(np.diff(q) >= 0)


def test_ols_recovers_coefficients(rng):
    X = rng.normal(size=(500, 3))
    y = X @ np.array([1.0, -2.0, 0.5]) + 3.0
    f = fit_ols(Dataset(X, y))
    np.testing.assert_allclose(f.coef, [1.0, -2.0, 0.5], atol=1e-10)
    assert f.intercept == pytest.approx(3.0)
