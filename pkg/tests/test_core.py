import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from modcal.core import (Dataset, Ensemble, Gaussian, Interval, Point, Quantiles, SplitSpec,
                         TooFewRowsError, VariantMismatchError, fit_standardizer, read_csv,
                         split_dataset)


def _data(n, d=2, seed=0):
    rng = np.random.default_rng(seed)
    return Dataset(rng.normal(size=(n, d)), rng.normal(size=n), name="toy")


class TestDataset:
    def test_row_mismatch_rejected(self):
        with pytest.raises(ValueError, match="rows"):
            Dataset(np.zeros((3, 2)), np.zeros(4))

    @pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
    def test_non_finite_rejected(self, bad):
        X = np.zeros((3, 1))
        X[1, 0] = bad
        with pytest.raises(ValueError, match="NaN or Inf"):
            Dataset(X, np.zeros(3))

    def test_vector_features_become_column(self):
        ds = Dataset(np.arange(4.0), np.arange(4.0))
        assert ds.features.shape == (4, 1)
        assert ds.n_features == 1

    def test_arrays_are_read_only(self):
        ds = _data(5)
        with pytest.raises(ValueError):
            ds.labels[0] = 1.0


class TestSplit:
    def test_ten_rows_sizes(self):
        train, cal, test = split_dataset(_data(10), SplitSpec(0.6, 0.2, 0.2, seed=7))
        assert (len(train), len(cal), len(test)) == (6, 2, 2)

    def test_deterministic(self):
        a = split_dataset(_data(40), SplitSpec(seed=3))
        b = split_dataset(_data(40), SplitSpec(seed=3))
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.row_ids, y.row_ids)

    def test_seed_changes_permutation_not_sizes(self):
        a = split_dataset(_data(100), SplitSpec(seed=0))
        b = split_dataset(_data(100), SplitSpec(seed=1))
        assert [len(s) for s in a] == [len(s) for s in b] == [60, 20, 20]
        assert not np.array_equal(a[0].row_ids, b[0].row_ids)

    @pytest.mark.parametrize("seed", range(32))
    def test_exhaustive_and_disjoint(self, seed):
        parts = split_dataset(_data(50), SplitSpec(seed=seed))
        ids = np.concatenate([p.row_ids for p in parts])
        np.testing.assert_array_equal(np.sort(ids), np.arange(50))

    def test_split_tags(self):
        train, cal, test = split_dataset(_data(20), SplitSpec())
        assert (train.split, cal.split, test.split) == ("train", "cal", "test")

    def test_too_few_rows(self):
        with pytest.raises(TooFewRowsError):
            split_dataset(_data(5), SplitSpec())

    @pytest.mark.parametrize("fracs", [(0.5, 0.2, 0.2), (0.6, 0.4, 0.0), (1.2, -0.1, -0.1)])
    def test_bad_fractions(self, fracs):
        with pytest.raises(ValueError):
            SplitSpec(*fracs)


class TestStandardizer:
    def test_labels_example(self):
        ds = Dataset(np.zeros((3, 1)), np.array([1.0, 2.0, 3.0]))
        z = fit_standardizer(ds).apply_labels(ds.labels)
        np.testing.assert_allclose(z, [-1.2247449, 0.0, 1.2247449], atol=1e-6)

    def test_constant_column(self):
        ds = Dataset(np.full((3, 1), 5.0), np.array([1.0, 2.0, 3.0]))
        st_ = fit_standardizer(ds)
        np.testing.assert_array_equal(st_.apply_features(ds.features), np.zeros((3, 1)))
        assert st_.feature_stds[0] == 1.0

    def test_round_trip(self, rng):
        ds = Dataset(rng.normal(3, 7, size=(50, 4)), rng.normal(-2, 5, size=50))
        st_ = fit_standardizer(ds)
        back = st_.invert(st_.apply(ds))
        np.testing.assert_allclose(back.features, ds.features, atol=1e-9)
        np.testing.assert_allclose(back.labels, ds.labels, atol=1e-9)


class TestReadCsv:
    def test_header_detected(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("a,b,y\n1,2,3\n4,5,6\n")
        ds = read_csv(p)
        assert ds.features.shape == (2, 2)
        np.testing.assert_array_equal(ds.labels, [3.0, 6.0])

    def test_no_header(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("1,3\n4,6\n")
        assert len(read_csv(p)) == 2


class TestPredictionOutputs:
    def test_interval_order(self):
        with pytest.raises(ValueError):
            Interval(np.array([2.0]), np.array([2.0]))

    def test_quantile_levels_increasing(self):
        with pytest.raises(ValueError):
            Quantiles(np.array([0.75, 0.25]), np.array([[1.0, 3.0]]))

    def test_quantile_values_non_decreasing(self):
        with pytest.raises(ValueError):
            Quantiles(np.array([0.25, 0.75]), np.array([[3.0, 1.0]]))

    def test_quantile_flat_region_allowed(self):
        Quantiles(np.array([0.25, 0.75]), np.array([[1.0, 1.0]]))

    def test_gaussian_positive_std(self):
        with pytest.raises(ValueError):
            Gaussian(np.array([0.0]), np.array([0.0]))

    @pytest.mark.parametrize("weights", [(1.0,), (-1.0, 2.0), (0.0, 0.0)])
    def test_ensemble_weights(self, weights):
        g = Gaussian(np.zeros(1), np.ones(1))
        with pytest.raises(ValueError):
            Ensemble((g, g), np.array(weights))

    def test_ensemble_needs_distributions(self):
        ens = Ensemble((Point(np.zeros(1)),))
        with pytest.raises(VariantMismatchError):
            ens.cdf(np.zeros(1))

    def test_take(self):
        g = Gaussian(np.arange(4.0), np.ones(4))
        np.testing.assert_array_equal(g.take([1, 3]).loc, [1.0, 3.0])

    @given(st.floats(0.001, 0.999), st.floats(-3, 3), st.floats(0.1, 3))
    def test_mixture_quantile_round_trip(self, p, mu, sd):
        ens = Ensemble((Gaussian(np.array([mu]), np.array([sd])),
                        Gaussian(np.array([mu + 2]), np.array([1.0]))))
        np.testing.assert_allclose(ens.cdf(ens.quantile(np.array([p]))), p, atol=1e-9)
