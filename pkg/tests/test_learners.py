import itertools

import numpy as np
import pytest

from ftracekit import learners as ln
from ftracekit.errors import EmptyData, WidthMismatch


def xor_data():
    X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    y = np.array([0, 1, 1, 0])
    return X, y


class TestDecisionTree:
    def test_one_dimensional_split(self):
        X = np.array([[1.0], [2.0], [10.0], [11.0]])
        y = np.array([0, 0, 1, 1])
        tree = ln.DecisionTree(max_depth=1).fit(X, y)
        assert tree.root.threshold == pytest.approx(6.0)
        assert tree.predict(X).tolist() == [0, 0, 1, 1]

    def test_pure_node_is_leaf(self):
        X = np.array([[0.0], [1.0]])
        tree = ln.DecisionTree().fit(X, np.array([1, 1]))
        assert tree.root.is_leaf
        assert tree.predict(np.array([[5.0]])).tolist() == [1]

    def test_xor_needs_depth_two(self):
        X, y = xor_data()
        shallow = ln.DecisionTree(max_depth=1).fit(X, y)
        assert (shallow.predict(X) == y).mean() < 1.0
        deep = ln.DecisionTree(max_depth=2).fit(X, y)
        assert (deep.predict(X) == y).mean() == 1.0

    def test_tie_break_lowest_feature_index(self):
        # both columns split the labels equally well
        X = np.array([[0.0, 0.0], [1.0, 1.0]])
        y = np.array([0, 1])
        tree = ln.DecisionTree(max_depth=1).fit(X, y)
        assert tree.root.feature == 0

    def test_proba_rows_sum_to_one(self):
        rng = np.random.default_rng(0)
        X = rng.random((40, 3))
        y = (X[:, 0] > 0.5).astype(int)
        tree = ln.DecisionTree(max_depth=4).fit(X, y)
        P = tree.predict_proba(rng.random((10, 3)))
        assert P.sum(axis=1) == pytest.approx(np.ones(10))

    def test_serialization_round_trip(self):
        rng = np.random.default_rng(1)
        X = rng.random((30, 4))
        y = (X[:, 2] > 0.3).astype(int)
        tree = ln.DecisionTree(max_depth=3).fit(X, y)
        again = ln.DecisionTree.from_dict(tree.to_dict())
        Xt = rng.random((20, 4))
        assert np.array_equal(tree.predict(Xt), again.predict(Xt))


class TestRandomForest:
    def _data(self, seed=0, n=80):
        rng = np.random.default_rng(seed)
        X = rng.random((n, 4))
        y = ((X[:, 0] + X[:, 1]) > 1.0).astype(int)
        return X, y

    def test_seed_determinism(self):
        X, y = self._data()
        a = ln.RandomForest(n_trees=10, seed=3).fit(X, y)
        b = ln.RandomForest(n_trees=10, seed=3).fit(X, y)
        assert np.array_equal(a.predict(X), b.predict(X))
        assert np.array_equal(a.predict_proba(X), b.predict_proba(X))

    def test_different_seeds_differ(self):
        X, y = self._data()
        a = ln.RandomForest(n_trees=10, seed=3).fit(X, y)
        b = ln.RandomForest(n_trees=10, seed=4).fit(X, y)
        assert not np.array_equal(a.predict_proba(X), b.predict_proba(X))

    def test_learns_the_signal(self):
        X, y = self._data(n=200)
        forest = ln.RandomForest(n_trees=30, max_depth=6, seed=0).fit(X, y)
        assert (forest.predict(X) == y).mean() >= 0.95

    def test_importances_normalized(self):
        X, y = self._data()
        forest = ln.RandomForest(n_trees=15, max_depth=5, seed=1).fit(X, y)
        imp = forest.feature_importances()
        assert imp.sum() == pytest.approx(1.0)
        assert np.all(imp >= 0)
        assert imp[:2].sum() > imp[2:].sum()

    def test_serialization_round_trip(self):
        X, y = self._data()
        forest = ln.RandomForest(n_trees=5, max_depth=3, seed=2).fit(X, y)
        again = ln.RandomForest.from_dict(forest.to_dict())
        assert np.array_equal(forest.predict(X), again.predict(X))


class TestGradientBoosting:
    def _data(self, seed=0):
        rng = np.random.default_rng(seed)
        X = rng.random((100, 3))
        y = (X[:, 1] + 0.1 * rng.standard_normal(100) > 0.5).astype(int)
        return X, y

    def test_zero_rounds_predicts_prior(self):
        X, y = self._data()
        model = ln.GradientBoosting(n_rounds=0).fit(X, y)
        assert model.predict_proba1(X) == pytest.approx(
            np.full(len(y), y.mean()), abs=1e-12)

    def test_loss_is_non_increasing(self):
        X, y = self._data()
        model = ln.GradientBoosting(n_rounds=100).fit(X, y)
        losses = model.train_losses
        assert len(losses) == 101
        assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))

    def test_fits_the_signal(self):
        X, y = self._data()
        model = ln.GradientBoosting(n_rounds=60, max_depth=3).fit(X, y)
        assert (model.predict(X) == y).mean() >= 0.95

    def test_single_class_warns_and_is_constant(self):
        X = np.random.default_rng(0).random((10, 2))
        with pytest.warns(UserWarning):
            model = ln.GradientBoosting(n_rounds=5).fit(X, np.ones(10, dtype=int))
        assert model.predict(X).tolist() == [1] * 10

    def test_empty_data_rejected(self):
        with pytest.raises(EmptyData):
            ln.GradientBoosting().fit(np.empty((0, 2)), np.empty(0))

    def test_serialization_round_trip(self):
        X, y = self._data()
        model = ln.GradientBoosting(n_rounds=10).fit(X, y)
        again = ln.GradientBoosting.from_dict(model.to_dict())
        assert model.decision_scores(X) == pytest.approx(again.decision_scores(X))


class TestLogistic:
    def test_zero_epochs_scores_half(self):
        X = np.random.default_rng(0).random((8, 3))
        model = ln.LogisticModel(epochs=0).fit(X, np.array([0, 1] * 4))
        assert model.predict_proba1(X) == pytest.approx(np.full(8, 0.5))

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(4)
        X = rng.standard_normal((25, 4))
        y = (rng.random(25) > 0.5).astype(float)
        w = rng.standard_normal(4) * 0.3
        b = 0.17
        l2 = 0.05
        _, gw, gb = ln.LogisticModel.loss_and_grad(w, b, X, y, l2)
        eps = 1e-6
        for j in range(4):
            wp, wm = w.copy(), w.copy()
            wp[j] += eps
            wm[j] -= eps
            lp, _, _ = ln.LogisticModel.loss_and_grad(wp, b, X, y, l2)
            lm, _, _ = ln.LogisticModel.loss_and_grad(wm, b, X, y, l2)
            assert gw[j] == pytest.approx((lp - lm) / (2 * eps), abs=1e-5)
        lp, _, _ = ln.LogisticModel.loss_and_grad(w, b + eps, X, y, l2)
        lm, _, _ = ln.LogisticModel.loss_and_grad(w, b - eps, X, y, l2)
        assert gb == pytest.approx((lp - lm) / (2 * eps), abs=1e-5)

    def test_separable_data_learned(self):
        rng = np.random.default_rng(2)
        X = rng.standard_normal((60, 2))
        y = (X[:, 0] > 0).astype(int)
        model = ln.LogisticModel(epochs=400).fit(X, y)
        assert (model.predict(X) == y).mean() >= 0.95


class TestOneVsRest:
    def _data(self):
        rng = np.random.default_rng(6)
        X = rng.random((90, 3))
        tasks = np.select([X[:, 0] > 0.66, X[:, 0] > 0.33],
                          ["high", "mid"], "low").tolist()
        return X, tasks

    def test_labels_sorted_and_matrix_shape(self):
        X, tasks = self._data()
        ovr = ln.OneVsRest(base_params={"n_trees": 10}, seed=0).fit(X, tasks)
        assert ovr.labels_ == ["high", "low", "mid"]
        Y = ovr.predict_matrix(X)
        assert Y.shape == (90, 3)
        assert set(np.unique(Y)) <= {0, 1}

    def test_recovers_task_labels(self):
        X, tasks = self._data()
        ovr = ln.OneVsRest(base_params={"n_trees": 20, "max_depth": 6},
                           seed=1).fit(X, tasks)
        Y = ovr.predict_matrix(X)
        truth = ln.one_hot(tasks, ovr.labels_)
        _, micro = ln.multilabel_f1(truth, Y)
        assert micro >= 0.9


class TestModelWrapper:
    def test_train_and_width_check(self):
        X = np.random.default_rng(0).random((20, 3))
        y = (X[:, 0] > 0.5).astype(int)
        model = ln.train_tree(X, y, {"max_depth": 2}, seed=0,
                              feature_names=["a", "b", "c"])
        assert model.predict(X).shape == (20,)
        with pytest.raises(WidthMismatch):
            model.predict(X[:, :2])
        with pytest.raises(WidthMismatch):
            model.scores(X[:, :2])

    @pytest.mark.parametrize("kind", ["tree", "forest", "boosting", "logistic"])
    def test_save_load_round_trip(self, kind, tmp_path):
        X = np.random.default_rng(1).random((40, 3))
        y = (X[:, 1] > 0.5).astype(int)
        model = ln.train(kind, X, y, {}, seed=2)
        path = tmp_path / "model.json"
        ln.save_model(model, path)
        again = ln.load_model(path)
        assert again.kind == kind
        assert np.array_equal(model.predict(X), again.predict(X))
        assert model.scores(X) == pytest.approx(again.scores(X))

    def test_one_vs_rest_save_load(self, tmp_path):
        X = np.random.default_rng(2).random((30, 2))
        tasks = ["a" if v > 0.5 else "b" for v in X[:, 0]]
        model = ln.train_one_vs_rest(X, tasks, {"n_trees": 5}, seed=3)
        ln.save_model(model, tmp_path / "m.json")
        again = ln.load_model(tmp_path / "m.json")
        assert np.array_equal(model.predict(X), again.predict(X))

    def test_bad_version_rejected(self, tmp_path):
        X = np.random.default_rng(3).random((10, 2))
        y = np.array([0, 1] * 5)
        model = ln.train_tree(X, y)
        path = tmp_path / "m.json"
        ln.save_model(model, path)
        import json
        payload = json.loads(path.read_text())
        payload["version"] = 99
        path.write_text(json.dumps(payload))
        with pytest.raises(ValueError):
            ln.load_model(path)


def oracle_auc(y, s):
    pos = [v for v, t in zip(s, y) if t == 1]
    neg = [v for v, t in zip(s, y) if t == 0]
    if not pos or not neg:
        return 0.5
    wins = 0.0
    for p, n in itertools.product(pos, neg):
        if p > n:
            wins += 1.0
        elif p == n:
            wins += 0.5
    return wins / (len(pos) * len(neg))


class TestMetrics:
    def test_auc_against_pairwise_oracle(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            n = int(rng.integers(4, 30))
            y = rng.integers(0, 2, size=n)
            s = np.round(rng.random(n), 1)  # coarse grid to force ties
            assert ln.roc_auc_score(y, s) == pytest.approx(
                oracle_auc(y, s), abs=1e-12)

    def test_auc_degenerate_returns_half(self):
        assert ln.roc_auc_score([1, 1], [0.2, 0.8]) == 0.5

    def test_binary_metrics_hand_case(self):
        y_true = np.array([1, 1, 0, 0])
        y_pred = np.array([1, 1, 1, 0])
        m = ln.binary_metrics(y_true, y_pred)
        assert m.accuracy == 0.75
        assert m.precision == pytest.approx(2 / 3)
        assert m.recall == 1.0
        assert m.f1 == pytest.approx(0.8)
        assert m.confusion == [[1, 1], [0, 2]]

    def test_one_hot(self):
        Y = ln.one_hot(["b", "a", "b"], ["a", "b"])
        assert Y.tolist() == [[0, 1], [1, 0], [0, 1]]

    def test_multilabel_f1_micro_equals_accuracy_for_exact_one_hot(self):
        truth = ln.one_hot(["a", "b", "a", "c"], ["a", "b", "c"])
        pred = ln.one_hot(["a", "b", "c", "c"], ["a", "b", "c"])
        macro, micro = ln.multilabel_f1(truth, pred)
        assert micro == pytest.approx(0.75)
        assert macro == pytest.approx(7 / 9)

    def test_monotone_transform_preserves_auc(self):
        rng = np.random.default_rng(8)
        y = rng.integers(0, 2, size=40)
        s = rng.random(40)
        assert ln.roc_auc_score(y, s) == pytest.approx(
            ln.roc_auc_score(y, np.exp(3 * s)), abs=1e-12)

    def test_evaluate_bundles_metrics(self):
        X = np.random.default_rng(5).random((60, 2))
        y = (X[:, 0] > 0.5).astype(int)
        model = ln.train_forest(X, y, {"n_trees": 10, "max_depth": 4}, seed=0)
        m = ln.evaluate(model, X, y)
        assert m.accuracy >= 0.9
        assert 0.0 <= m.roc_auc <= 1.0
        assert sum(sum(row) for row in m.confusion) == 60

    def test_evaluate_multilabel(self):
        X = np.random.default_rng(7).random((60, 2))
        tasks = ["hi" if v > 0.5 else "lo" for v in X[:, 0]]
        model = ln.train_one_vs_rest(X, tasks,
                                     {"n_trees": 15, "max_depth": 4}, seed=0)
        m = ln.evaluate_multilabel(model, X, tasks)
        assert m.f1_micro >= 0.9
        assert m.f1_macro is not None
        assert m.accuracy >= 0.9
