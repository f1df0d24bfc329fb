import json
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from metriq import gbm
from metriq.evalreport import r_squared
from metriq.gbm import (
    GBMError,
    GBMHyper,
    GBMModel,
    LabeledExample,
    RegressionTree,
    feature_importances,
    fit_classifier,
    make_labels,
    predict,
    predict_proba,
    split_train_val,
    train_gbc,
    train_gbr,
)


def _triples(stars, ids=None):
    ids = ids or [f"r{i:02d}" for i in range(len(stars))]
    return [(rid, s, {"a": float(s)}) for rid, s in zip(ids, stars)]


class TestLabels:
    def test_quintiles(self):
        ex = make_labels(_triples(range(1, 11)), ["a"], 0.2)
        pos = sorted(e.features[0] for e in ex if e.label == 1)
        neg = sorted(e.features[0] for e in ex if e.label == 0)
        assert pos == [9.0, 10.0] and neg == [1.0, 2.0]
        assert len(ex) == 4

    def test_ties_by_repo_id(self):
        ex = make_labels(_triples([5] * 10), ["a"], 0.2)
        assert [e.repo_id for e in ex if e.label == 1] == ["r00", "r01"]
        assert [e.repo_id for e in ex if e.label == 0] == ["r08", "r09"]

    def test_half(self):
        ex = make_labels(_triples([1, 2, 3, 4]), ["a"], 0.5)
        assert sorted(e.label for e in ex) == [0, 0, 1, 1]

    @pytest.mark.parametrize("q", [0.0, -0.1, 0.51])
    def test_bad_q(self, q):
        with pytest.raises(GBMError):
            make_labels(_triples(range(10)), ["a"], q)

    def test_missing_imputed(self):
        recs = [("a", 3, {}), ("b", 2, {"x": 5.0}), ("c", 1, {"x": 1.0}), ("d", 0, {"x": 2.0})]
        ex = make_labels(recs, ["x"], 0.5)
        assert ex[0].features[0] == 100.0


def _examples(n_pos, n_neg):
    out = [LabeledExample(np.array([float(i)]), 1, f"p{i}") for i in range(n_pos)]
    out += [LabeledExample(np.array([float(i)]), 0, f"n{i}") for i in range(n_neg)]
    return out


class TestSplit:
    def test_hundred(self):
        tr, va = split_train_val(_examples(50, 50), seed=7)
        assert len(tr) == 80 and len(va) == 20
        assert sum(e.label for e in tr) == 40 and sum(e.label for e in va) == 10

    def test_repeatable(self):
        a = split_train_val(_examples(50, 50), 7)
        b = split_train_val(_examples(50, 50), 7)
        assert [e.repo_id for e in a[1]] == [e.repo_id for e in b[1]]

    def test_seed_matters(self):
        a = split_train_val(_examples(50, 50), 7)
        b = split_train_val(_examples(50, 50), 8)
        assert [e.repo_id for e in a[1]] != [e.repo_id for e in b[1]]

    def test_ten(self):
        tr, va = split_train_val(_examples(5, 5), 0)
        assert len(tr) == 8 and len(va) == 2
        assert sorted(e.label for e in va) == [0, 1]

    def test_too_small_class(self):
        with pytest.raises(GBMError):
            split_train_val(_examples(1, 9), 0)

    @given(st.integers(2, 60), st.integers(2, 60), st.integers(0, 2**40))
    def test_disjoint_and_stratified(self, n_pos, n_neg, seed):
        assume(n_pos + n_neg >= 5)
        ex = _examples(n_pos, n_neg)
        tr, va = split_train_val(ex, seed)
        ids = [e.repo_id for e in tr + va]
        assert sorted(ids) == sorted(e.repo_id for e in ex)
        assert sum(e.label for e in va) == n_pos // 5
        assert sum(1 - e.label for e in va) == n_neg // 5


class TestClassifier:
    def test_prior_only(self):
        X = np.arange(10.0)[:, None]
        y = np.array([0, 1] * 5)
        m = fit_classifier(X, y, GBMHyper(T=0))
        assert m.F0 == 0.0 and not m.trees
        assert np.all(predict_proba(m, X) == 0.5)

    def test_separable(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(0, 100, 400)
        x = x[np.abs(x - 50) > 0.5]
        y = (x > 50).astype(float)
        ex = [LabeledExample(np.array([v]), int(c), str(i)) for i, (v, c) in enumerate(zip(x, y))]
        tr, va = split_train_val(ex, 1)
        m = train_gbc(tr, GBMHyper(T=20))
        Xv, yv = gbm.stack(va)
        assert np.mean((predict_proba(m, Xv) >= 0.5) == yv) == 1.0

    def test_noise_feature(self):
        rng = np.random.default_rng(42)
        n = 600
        signal = rng.uniform(0, 100, n)
        noise = rng.uniform(0, 100, n)
        y = (signal + rng.normal(0, 10, n) > 50).astype(float)
        m = fit_classifier(np.column_stack([signal, noise]), y)
        imp = feature_importances(m)
        assert imp[0] > 0.8 and imp[1] < 0.2

    def test_loss_non_increasing(self):
        rng = np.random.default_rng(3)
        X = rng.uniform(0, 100, (300, 4))
        y = (X[:, 0] + X[:, 1] + rng.normal(0, 20, 300) > 100).astype(float)
        m = fit_classifier(X, y)
        loss = np.array(m.train_loss)
        assert len(loss) == 101
        assert np.all(np.diff(loss) <= 1e-12)

    def test_single_class(self):
        with pytest.raises(GBMError):
            fit_classifier(np.zeros((5, 1)), np.ones(5))

    def test_dimension_mismatch(self):
        m = fit_classifier(np.arange(10.0)[:, None], np.array([0, 1] * 5), GBMHyper(T=1))
        with pytest.raises(GBMError):
            predict_proba(m, np.zeros((2, 3)))

    def test_stump_arithmetic(self):
        stump = RegressionTree(
            feature=np.array([0, -1, -1]), threshold=np.array([0.0, 0.0, 0.0]),
            left=np.array([1, -1, -1]), right=np.array([2, -1, -1]),
            value=np.array([0.0, 0.0, 1.0]), gain=np.array([1.0, 0.0, 0.0]),
        )
        m = GBMModel("classifier", 0.0, 1.0, 1, 1, [stump])
        assert predict_proba(m, np.array([1.0])) == pytest.approx(0.731059, abs=1e-6)
        assert predict_proba(m, np.array([-1.0])) == 0.5

    @pytest.mark.parametrize("F0", [1e6, -1e6, 36.5, -36.5])
    def test_clamped(self, F0):
        m = GBMModel("classifier", F0, 0.1, 0, 1)
        p = predict_proba(m, np.array([0.0]))
        assert 0.0 < p < 1.0 and math.isfinite(p)

    def test_all_splits_on_one_feature(self):
        rng = np.random.default_rng(0)
        X = np.column_stack([rng.uniform(0, 1, 100), np.zeros(100), np.ones(100)])
        y = (X[:, 0] > 0.5).astype(float)
        imp = feature_importances(fit_classifier(X, y, GBMHyper(T=5)))
        assert imp.tolist() == [1.0, 0.0, 0.0]

    def test_no_split_error(self):
        m = fit_classifier(np.zeros((10, 1)), np.array([0, 1] * 5), GBMHyper(T=3))
        with pytest.raises(GBMError):
            feature_importances(m)

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 2**32))
    def test_importance_sum_and_monotone_invariance(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.uniform(0, 100, (120, 3))
        y = (X[:, 0] - X[:, 2] + rng.normal(0, 15, 120) > 0).astype(float)
        if y.min() == y.max():
            return
        hyper = GBMHyper(T=10)
        a = fit_classifier(X, y, hyper)
        Xt = X.copy()
        Xt[:, 0] = np.exp(Xt[:, 0] / 25.0)
        Xt[:, 2] = Xt[:, 2] ** 3 + 7.0
        b = fit_classifier(Xt, y, hyper)
        ia, ib = feature_importances(a), feature_importances(b)
        assert abs(ia.sum() - 1.0) <= 1e-12
        for ta, tb in zip(a.trees, b.trees):
            assert ta.feature.tolist() == tb.feature.tolist()
        assert np.allclose(ia, ib, rtol=1e-9, atol=1e-12)

    def test_serialization_identity(self, tmp_path):
        rng = np.random.default_rng(1)
        X = rng.uniform(0, 100, (80, 2))
        y = (X[:, 0] > 40).astype(float)
        m1 = fit_classifier(X, y, GBMHyper(T=15), ["a", "b"], seed=9)
        m2 = fit_classifier(X, y, GBMHyper(T=15), ["a", "b"], seed=9)
        gbm.dump_model(m1, tmp_path / "a.json")
        gbm.dump_model(m2, tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
        back = gbm.load_model(tmp_path / "a.json")
        assert np.array_equal(predict_proba(back, X), predict_proba(m1, X))
        assert json.loads((tmp_path / "a.json").read_text())["seed"] == 9


class TestRegressor:
    def test_linear(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(0, 10, 500)
        y = 3 * x + rng.normal(0, 1e-6, 500)
        idx_tr, idx_va = gbm.split_indices(500, 0)
        m = train_gbr(x[idx_tr, None], y[idx_tr], GBMHyper(T=200))
        assert r_squared(predict(m, x[idx_va, None]), y[idx_va]) > 0.95

    def test_constant(self):
        m = train_gbr(np.arange(20.0)[:, None], np.full(20, 4.2))
        assert np.all(predict(m, np.arange(20.0)[:, None]) == 4.2)

    def test_prior_only(self):
        y = np.array([1.0, 2.0, 6.0])
        m = train_gbr(np.zeros((3, 1)), y, GBMHyper(T=0))
        assert np.all(predict(m, np.zeros((3, 1))) == 3.0)

    def test_empty(self):
        with pytest.raises(GBMError):
            train_gbr(np.zeros((0, 1)), np.zeros(0))

    def test_depth_respected(self):
        rng = np.random.default_rng(2)
        X = rng.uniform(0, 1, (200, 3))
        m = train_gbr(X, X @ [1.0, 2.0, 3.0], GBMHyper(T=5, max_depth=2, min_leaf=10))
        for t in m.trees:
            leaves = t.apply(X)
            assert np.bincount(leaves).max() <= 200
            assert np.all(np.bincount(leaves)[np.bincount(leaves) > 0] >= 10)
            assert t.n_splits <= 3
            assert np.all(t.gain >= 0)
