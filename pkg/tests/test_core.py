import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gibbsvi import core
from gibbsvi.errors import (
    ConfigError,
    DataError,
    EmptyDatasetError,
    MissingFileError,
    NonNumericFeatureError,
    TooManyClassesError,
    UnknownPositiveLabelError,
)


def write(path, text):
    path.write_text(text)
    return str(path)


class TestLoadCsv:
    def test_two_row_binary_mapping(self, tmp_path):
        p = write(tmp_path / "d.csv", "a,b,label\n1.0,2.0,1\n3.0,4.0,0\n")
        ds = core.load_csv(p, "label", "1")
        assert ds.labels.tolist() == [1.0, -1.0]
        assert ds.features.tolist() == [[1.0, 2.0], [3.0, 4.0]]

    def test_three_label_tokens_rejected(self, tmp_path):
        p = write(tmp_path / "d.csv", "1,a\n2,b\n3,c\n")
        with pytest.raises(TooManyClassesError):
            core.load_csv(p, 1, "a")

    def test_feature_bound(self, tmp_path):
        p = write(tmp_path / "d.csv", "2,-3,1\n1,0,0\n")
        ds = core.load_csv(p, 2, "1")
        assert ds.feature_bound == 3.0

    def test_missing_file(self, tmp_path):
        with pytest.raises(MissingFileError):
            core.load_csv(str(tmp_path / "nope.csv"), 0, "1")

    def test_non_numeric_cell(self, tmp_path):
        p = write(tmp_path / "d.csv", "x,y,label\n1,oops,1\n2,3,0\n")
        with pytest.raises(NonNumericFeatureError):
            core.load_csv(p, "label", "1")

    def test_empty_file(self, tmp_path):
        with pytest.raises(EmptyDatasetError):
            core.load_csv(write(tmp_path / "d.csv", ""), 0, "1")
        with pytest.raises(EmptyDatasetError):
            core.load_csv(write(tmp_path / "h.csv", "x,label\n"), "label", "1")

    def test_unknown_positive_label(self, tmp_path):
        p = write(tmp_path / "d.csv", "1,a\n2,b\n")
        with pytest.raises(UnknownPositiveLabelError):
            core.load_csv(p, 1, "zzz")

    def test_label_column_by_index_without_header(self, tmp_path):
        p = write(tmp_path / "d.csv", "1,5.5,1\n0,6.5,0\n")
        ds = core.load_csv(p, 0, "1")
        assert ds.labels.tolist() == [1.0, -1.0]
        assert ds.features.shape == (2, 2)

    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(3)
        ds = core.LabeledDataset(rng.standard_normal((7, 3)) * 1e3,
                                 np.where(rng.random(7) < 0.5, 1.0, -1.0))
        p = tmp_path / "rt.csv"
        core.save_csv(ds, p)
        back = core.load_csv(str(p), "label", "1")
        assert np.array_equal(back.features, ds.features)
        assert np.array_equal(back.labels, ds.labels)


class TestSplitFolds:
    def test_two_folds_of_two(self):
        ds = core.LabeledDataset(np.arange(8.0).reshape(4, 2),
                                 np.array([1.0, -1.0, 1.0, -1.0]))
        folds = core.split_folds(ds, 2, seed=0)
        assert len(folds) == 2
        for train, test in folds:
            assert len(test) == 2 and len(train) == 2
            assert set(train) | set(test) == {0, 1, 2, 3}
            assert not set(train) & set(test)

    def test_leave_one_out(self):
        ds = core.LabeledDataset(np.arange(10.0).reshape(5, 2),
                                 np.array([1.0, -1.0, 1.0, -1.0, 1.0]))
        folds = core.split_folds(ds, 5, seed=1)
        tests = sorted(int(t[0]) for _, t in folds)
        assert tests == [0, 1, 2, 3, 4]

    def test_deterministic(self):
        ds = core.LabeledDataset(np.arange(14.0).reshape(7, 2),
                                 np.array([1.0, -1, 1, -1, 1, -1, 1]))
        a = core.split_folds(ds, 3, seed=9)
        b = core.split_folds(ds, 3, seed=9)
        for (tr1, te1), (tr2, te2) in zip(a, b):
            assert np.array_equal(tr1, tr2) and np.array_equal(te1, te2)

    @given(n=st.integers(4, 40), k=st.integers(2, 6), seed=st.integers(0, 100))
    @settings(max_examples=40, deadline=None)
    def test_partition_property(self, n, k, seed):
        if k > n:
            return
        ds = core.LabeledDataset(np.arange(2.0 * n).reshape(n, 2),
                                 np.resize([1.0, -1.0], n))
        folds = core.split_folds(ds, k, seed)
        seen = np.concatenate([t for _, t in folds])
        assert sorted(seen.tolist()) == list(range(n))
        sizes = [len(t) for _, t in folds]
        assert max(sizes) - min(sizes) <= 1

    def test_k_out_of_range(self):
        ds = core.LabeledDataset(np.arange(8.0).reshape(4, 2),
                                 np.array([1.0, -1, 1, -1]))
        for k in (1, 5):
            with pytest.raises(ConfigError):
                core.split_folds(ds, k, seed=0)


class TestLabeledDataset:
    def test_invariants(self):
        with pytest.raises(DataError):
            core.LabeledDataset(np.ones((3, 2)), np.array([1.0, 2.0, -1.0]))
        with pytest.raises(DataError):
            core.LabeledDataset(np.array([[np.inf, 0.0], [0.0, 1.0]]),
                                np.array([1.0, -1.0]))
        with pytest.raises(EmptyDatasetError):
            core.LabeledDataset(np.ones((1, 2)), np.array([1.0]))

    def test_scaled_to_unit(self):
        ds = core.LabeledDataset(np.array([[2.0, -8.0], [-4.0, 2.0]]),
                                 np.array([1.0, -1.0]))
        scaled = ds.scaled_to_unit()
        assert scaled.feature_bound == 1.0
        assert np.allclose(scaled.features, [[0.5, -1.0], [-1.0, 0.25]])

    def test_immutable(self):
        ds = core.LabeledDataset(np.ones((2, 2)), np.array([1.0, -1.0]))
        with pytest.raises(ValueError):
            ds.features[0, 0] = 5.0


class TestObservedMatrix:
    def test_valid(self):
        om = core.ObservedMatrix(np.array([1, 2]), np.array([1, 1]),
                                 np.array([0.5, -1.0]), m1=2, m2=1)
        assert om.n == 2

    def test_rejections(self):
        with pytest.raises(DataError):
            core.ObservedMatrix(np.array([1, 1]), np.array([1, 1]),
                                np.array([1.0, 2.0]), m1=2, m2=2)  # duplicate
        with pytest.raises(DataError):
            core.ObservedMatrix(np.array([0]), np.array([1]),
                                np.array([1.0]), m1=2, m2=2)       # 1-based
        with pytest.raises(DataError):
            core.ObservedMatrix(np.array([3]), np.array([1]),
                                np.array([1.0]), m1=2, m2=2)

    def test_entries_csv(self, tmp_path):
        p = tmp_path / "e.csv"
        p.write_text("row,col,value\n1,2,0.5\n3,1,-2.0\n")
        om = core.load_entries_csv(str(p))
        assert om.m1 == 3 and om.m2 == 2
        assert om.values.tolist() == [0.5, -2.0]


class TestGaussianMeasure:
    @pytest.mark.parametrize("family", core.FAMILIES)
    def test_quad_forms_match_dense_cov(self, family):
        rng = np.random.default_rng(5)
        d = 3
        from conftest import random_measure
        q = random_measure(rng, family, d)
        V = rng.standard_normal((6, d))
        dense = np.array([v @ q.cov() @ v for v in V])
        assert np.allclose(q.quad_forms(V), dense)
        assert np.isclose(q.trace_cov(), np.trace(q.cov()))
        assert np.isclose(q.logdet_cov(), np.linalg.slogdet(q.cov())[1])

    @pytest.mark.parametrize("family", core.FAMILIES)
    def test_vector_round_trip(self, family):
        rng = np.random.default_rng(6)
        from conftest import random_measure
        q = random_measure(rng, family, 4)
        vec = core.to_vector(q)
        assert vec.shape == (core.n_params(family, 4),)
        q2 = core.from_vector(family, 4, vec)
        assert np.allclose(q2.mean, q.mean)
        assert np.allclose(q2.cov(), q.cov())

    def test_validation(self):
        with pytest.raises(DataError):
            core.GaussianMeasure.shared(np.zeros(2), -1.0)
        with pytest.raises(DataError):
            core.GaussianMeasure.diagonal(np.zeros(2), np.array([1.0, 0.0]))
        with pytest.raises(DataError):
            core.GaussianMeasure.full(np.zeros(2), np.array([[1.0, 0.5], [0.0, 1.0]]))
        with pytest.raises(DataError):
            core.GaussianMeasure.full(np.zeros(2), np.array([[1.0, 0.0], [0.5, -1.0]]))

    def test_scale_cov(self):
        q = core.GaussianMeasure.diagonal(np.ones(2), np.array([1.0, 4.0]))
        assert np.allclose(q.scale_cov(0.25).cov(), 0.25 * q.cov())


class TestIsotropicPrior:
    def test_validation(self):
        with pytest.raises(ConfigError):
            core.IsotropicPrior(0.0, 2)
        with pytest.raises(ConfigError):
            core.IsotropicPrior(1.0, 0)

    def test_log_density_matches_scipy(self):
        from scipy.stats import multivariate_normal
        prior = core.IsotropicPrior(2.5, 3)
        theta = np.random.default_rng(0).standard_normal((5, 3))
        expect = multivariate_normal(np.zeros(3), 2.5 * np.eye(3)).logpdf(theta)
        assert np.allclose(prior.log_density(theta), expect)
