"""In-repo classifiers and evaluation metrics.

Decision tree (CART/Gini), random forest, gradient boosting with logistic
loss, L2 logistic regression, and a one-vs-rest multi-label wrapper.
Everything is a deterministic function of (data, params, seed).
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import EmptyData, SingleClass, WidthMismatch

MODEL_FORMAT_VERSION = 1


def _sub_seed(seed: int, *tags: int) -> int:
    return int(np.random.SeedSequence([seed, *tags]).generate_state(1)[0])


# ---------------------------------------------------------------------------
# decision trees

@dataclass
class TreeNode:
    feature: int = -1
    threshold: float = 0.0
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None
    value: Optional[np.ndarray] = None  # leaf payload

    @property
    def is_leaf(self) -> bool:
        return self.value is not None

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"value": np.asarray(self.value).tolist()}
        return {"feature": self.feature, "threshold": self.threshold,
                "left": self.left.to_dict(), "right": self.right.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "TreeNode":
        if "value" in d:
            return cls(value=np.asarray(d["value"], dtype=float))
        return cls(feature=d["feature"], threshold=d["threshold"],
                   left=cls.from_dict(d["left"]), right=cls.from_dict(d["right"]))


def _gini(counts: np.ndarray) -> float:
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return float(1.0 - np.sum(p * p))


class DecisionTree:
    """CART classifier with exhaustive midpoint threshold search.

    Ties in impurity are broken by lowest feature index, then lowest
    threshold (guaranteed by ascending scan order and strict improvement).
    """

    def __init__(self, max_depth=None, min_samples_split=2,
                 max_features=None, rng=None):
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.max_features = max_features
        self.rng = rng
        self.root: Optional[TreeNode] = None
        self.classes_: Optional[np.ndarray] = None
        self._imp_raw: Optional[np.ndarray] = None

    def fit(self, X, y, classes=None):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y)
        if X.shape[0] == 0:
            raise EmptyData("cannot fit a tree on zero samples")
        self.classes_ = np.asarray(classes if classes is not None
                                   else np.unique(y))
        class_pos = {c: i for i, c in enumerate(self.classes_.tolist())}
        yi = np.array([class_pos[v] for v in y.tolist()], dtype=int)
        self._n_total = X.shape[0]
        self._imp_raw = np.zeros(X.shape[1])
        self.root = self._grow(X, yi, 0)
        return self

    def _feature_indices(self, d: int) -> np.ndarray:
        if self.max_features is None or self.max_features >= d:
            return np.arange(d)
        picked = self.rng.choice(d, size=self.max_features, replace=False)
        return np.sort(picked)

    def _grow(self, X, yi, depth) -> TreeNode:
        c = len(self.classes_)
        counts = np.bincount(yi, minlength=c).astype(float)
        n = len(yi)
        dist = counts / n
        if (counts.max() == n
                or (self.max_depth is not None and depth >= self.max_depth)
                or n < self.min_samples_split):
            return TreeNode(value=dist)
        split = self._best_split(X, yi, c)
        if split is None:
            return TreeNode(value=dist)
        feat, thr, decrease = split
        self._imp_raw[feat] += (n / self._n_total) * decrease
        mask = X[:, feat] <= thr
        return TreeNode(feature=int(feat), threshold=float(thr),
                        left=self._grow(X[mask], yi[mask], depth + 1),
                        right=self._grow(X[~mask], yi[~mask], depth + 1))

    def _best_split(self, X, yi, c):
        n, d = X.shape
        total = np.bincount(yi, minlength=c).astype(float)
        parent_imp = _gini(total)
        best = None  # (feat, thr, weighted_impurity)
        for j in self._feature_indices(d):
            x = X[:, j]
            order = np.argsort(x, kind="stable")
            xs = x[order]
            valid = xs[:-1] < xs[1:]
            if not valid.any():
                continue
            onehot = np.zeros((n, c))
            onehot[np.arange(n), yi[order]] = 1.0
            cum = np.cumsum(onehot, axis=0)
            left = cum[:-1]
            nl = np.arange(1, n, dtype=float)
            nr = n - nl
            right = total - left
            with np.errstate(invalid="ignore", divide="ignore"):
                gl = 1.0 - np.sum((left / nl[:, None]) ** 2, axis=1)
                gr = 1.0 - np.sum((right / nr[:, None]) ** 2, axis=1)
            w = (nl * gl + nr * gr) / n
            w[~valid] = np.inf
            i = int(np.argmin(w))
            if not np.isfinite(w[i]):
                continue
            if best is None or w[i] < best[2]:
                thr = (xs[i] + xs[i + 1]) / 2.0
                best = (j, thr, float(w[i]))
        if best is None:
            return None
        # zero-gain splits are kept: XOR-style targets need them
        feat, thr, w = best
        return feat, thr, max(parent_imp - w, 0.0)

    def predict_proba(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.empty((X.shape[0], len(self.classes_)))
        for i, row in enumerate(X):
            node = self.root
            while not node.is_leaf:
                node = node.left if row[node.feature] <= node.threshold else node.right
            out[i] = node.value
        return out

    def predict(self, X) -> np.ndarray:
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

    def to_dict(self) -> dict:
        return {"classes": self.classes_.tolist(), "root": self.root.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionTree":
        t = cls()
        t.classes_ = np.asarray(d["classes"])
        t.root = TreeNode.from_dict(d["root"])
        return t


class RegressionTree:
    """Variance-reduction tree for boosting residuals; Newton leaf values
    sum(g)/sum(h)."""

    def __init__(self, max_depth=3, min_samples_split=2):
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.root: Optional[TreeNode] = None

    def fit(self, X, g, h):
        X = np.asarray(X, dtype=float)
        g = np.asarray(g, dtype=float)
        h = np.asarray(h, dtype=float)
        self.root = self._grow(X, g, h, 0)
        return self

    def _leaf(self, g, h) -> TreeNode:
        return TreeNode(value=np.array([g.sum() / (h.sum() + 1e-12)]))

    def _grow(self, X, g, h, depth) -> TreeNode:
        n = len(g)
        if depth >= self.max_depth or n < self.min_samples_split:
            return self._leaf(g, h)
        split = self._best_split(X, g)
        if split is None:
            return self._leaf(g, h)
        feat, thr = split
        mask = X[:, feat] <= thr
        return TreeNode(feature=int(feat), threshold=float(thr),
                        left=self._grow(X[mask], g[mask], h[mask], depth + 1),
                        right=self._grow(X[~mask], g[~mask], h[~mask], depth + 1))

    def _best_split(self, X, g):
        n, d = X.shape
        total_sum = g.sum()
        total_sq = np.sum(g * g)
        best = None
        for j in range(d):
            x = X[:, j]
            order = np.argsort(x, kind="stable")
            xs = x[order]
            gs = g[order]
            valid = xs[:-1] < xs[1:]
            if not valid.any():
                continue
            cum = np.cumsum(gs)[:-1]
            nl = np.arange(1, n, dtype=float)
            nr = n - nl
            sse = total_sq - cum ** 2 / nl - (total_sum - cum) ** 2 / nr
            sse[~valid] = np.inf
            i = int(np.argmin(sse))
            if not np.isfinite(sse[i]):
                continue
            if best is None or sse[i] < best[2]:
                best = (j, (xs[i] + xs[i + 1]) / 2.0, float(sse[i]))
        if best is None:
            return None
        base = total_sq - total_sum ** 2 / n
        if base - best[2] <= 1e-12:
            return None
        return best[0], best[1]

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.empty(X.shape[0])
        for i, row in enumerate(X):
            node = self.root
            while not node.is_leaf:
                node = node.left if row[node.feature] <= node.threshold else node.right
            out[i] = node.value[0]
        return out

    def to_dict(self) -> dict:
        return {"root": self.root.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "RegressionTree":
        t = cls()
        t.root = TreeNode.from_dict(d["root"])
        return t


# ---------------------------------------------------------------------------
# ensembles and linear model

class RandomForest:
    def __init__(self, n_trees=100, max_depth=None, min_samples_split=2,
                 max_features="sqrt", bootstrap=True, seed=0):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.seed = seed
        self.trees: list[DecisionTree] = []
        self.classes_: Optional[np.ndarray] = None

    def _resolve_max_features(self, d: int) -> Optional[int]:
        if self.max_features in (None, "all"):
            return None
        if self.max_features == "sqrt":
            return int(math.ceil(math.sqrt(d)))
        return int(self.max_features)

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y)
        if X.shape[0] == 0:
            raise EmptyData("cannot fit a forest on zero samples")
        self.classes_ = np.unique(y)
        mf = self._resolve_max_features(X.shape[1])
        n = X.shape[0]
        self.trees = []
        for t in range(self.n_trees):
            rng = np.random.default_rng(_sub_seed(self.seed, t))
            idx = rng.integers(0, n, n) if self.bootstrap else np.arange(n)
            tree = DecisionTree(max_depth=self.max_depth,
                                min_samples_split=self.min_samples_split,
                                max_features=mf, rng=rng)
            tree.fit(X[idx], y[idx], classes=self.classes_)
            self.trees.append(tree)
        return self

    def predict_proba(self, X) -> np.ndarray:
        return np.mean([t.predict_proba(X) for t in self.trees], axis=0)

    def predict(self, X) -> np.ndarray:
        # majority vote over hard per-tree predictions; ties -> lowest class
        X = np.asarray(X, dtype=float)
        votes = np.zeros((X.shape[0], len(self.classes_)), dtype=int)
        pos = {c: i for i, c in enumerate(self.classes_.tolist())}
        for t in self.trees:
            pred = t.predict(X)
            for i, p in enumerate(pred.tolist()):
                votes[i, pos[p]] += 1
        return self.classes_[np.argmax(votes, axis=1)]

    def feature_importances(self) -> np.ndarray:
        raw = np.mean([t._imp_raw for t in self.trees], axis=0)
        total = raw.sum()
        return raw / total if total > 0 else raw

    def to_dict(self) -> dict:
        return {"n_trees": self.n_trees, "classes": self.classes_.tolist(),
                "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d: dict) -> "RandomForest":
        f = cls(n_trees=d["n_trees"])
        f.classes_ = np.asarray(d["classes"])
        f.trees = [DecisionTree.from_dict(t) for t in d["trees"]]
        return f


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))


def _log_loss(y, p):
    p = np.clip(p, 1e-12, 1 - 1e-12)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


class GradientBoosting:
    """Gradient boosting with logistic loss.

    Each round fits a regression tree to the residuals y - p with Newton
    leaf values; the contribution is halved until training log-loss does
    not increase, so the recorded loss sequence is non-increasing.
    """

    def __init__(self, n_rounds=100, learning_rate=0.1, max_depth=3,
                 min_samples_split=2, seed=0):
        self.n_rounds = n_rounds
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.seed = seed
        self.prior = 0.0
        self.trees: list[RegressionTree] = []
        self.scales: list[float] = []
        self.train_losses: list[float] = []
        self.constant = False

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.shape[0] == 0:
            raise EmptyData("cannot fit boosting on zero samples")
        pbar = float(np.mean(y))
        if pbar in (0.0, 1.0):
            warnings.warn("single-class training data; emitting a constant "
                          "model", UserWarning)
            self.constant = True
            self.prior = 500.0 if pbar == 1.0 else -500.0
            self.train_losses = [_log_loss(y, _sigmoid(np.full(len(y), self.prior)))]
            return self
        self.prior = math.log(pbar / (1.0 - pbar))
        F = np.full(X.shape[0], self.prior)
        self.train_losses = [_log_loss(y, _sigmoid(F))]
        for _ in range(self.n_rounds):
            p = _sigmoid(F)
            g = y - p
            h = p * (1.0 - p)
            tree = RegressionTree(max_depth=self.max_depth,
                                  min_samples_split=self.min_samples_split)
            tree.fit(X, g, h)
            scale = self.learning_rate
            upd = scale * tree.predict(X)
            prev = self.train_losses[-1]
            # halve the step if it would increase training loss
            for _ in range(40):
                if _log_loss(y, _sigmoid(F + upd)) <= prev + 1e-12:
                    break
                scale *= 0.5
                upd *= 0.5
            else:
                scale = 0.0
                upd = np.zeros_like(upd)
            F = F + upd
            self.trees.append(tree)
            self.scales.append(scale)
            self.train_losses.append(_log_loss(y, _sigmoid(F)))
        return self

    def decision_scores(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        F = np.full(X.shape[0], self.prior)
        for tree, scale in zip(self.trees, self.scales):
            if scale:
                F += scale * tree.predict(X)
        return F

    def predict_proba1(self, X) -> np.ndarray:
        return _sigmoid(self.decision_scores(X))

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba1(X) >= 0.5).astype(int)

    def to_dict(self) -> dict:
        return {"prior": self.prior, "constant": self.constant,
                "scales": self.scales,
                "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d: dict) -> "GradientBoosting":
        m = cls()
        m.prior = d["prior"]
        m.constant = d["constant"]
        m.scales = list(d["scales"])
        m.trees = [RegressionTree.from_dict(t) for t in d["trees"]]
        return m


class LogisticModel:
    """L2-regularized logistic regression, full-batch gradient descent,
    deterministic zero initialization (bias unregularized)."""

    def __init__(self, epochs=500, step=0.5, l2=1e-4):
        self.epochs = epochs
        self.step = step
        self.l2 = l2
        self.w: Optional[np.ndarray] = None
        self.b = 0.0

    @staticmethod
    def loss_and_grad(w, b, X, y, l2):
        p = _sigmoid(X @ w + b)
        loss = _log_loss(y, p) + 0.5 * l2 * float(np.dot(w, w))
        err = p - y
        grad_w = X.T @ err / len(y) + l2 * w
        grad_b = float(np.mean(err))
        return loss, grad_w, grad_b

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.shape[0] == 0:
            raise EmptyData("cannot fit logistic regression on zero samples")
        self.w = np.zeros(X.shape[1])
        self.b = 0.0
        for _ in range(self.epochs):
            _, gw, gb = self.loss_and_grad(self.w, self.b, X, y, self.l2)
            self.w -= self.step * gw
            self.b -= self.step * gb
        return self

    def predict_proba1(self, X) -> np.ndarray:
        return _sigmoid(np.asarray(X, dtype=float) @ self.w + self.b)

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba1(X) >= 0.5).astype(int)

    def to_dict(self) -> dict:
        return {"w": self.w.tolist(), "b": self.b}

    @classmethod
    def from_dict(cls, d: dict) -> "LogisticModel":
        m = cls()
        m.w = np.asarray(d["w"], dtype=float)
        m.b = d["b"]
        return m


class OneVsRest:
    """One binary model per task label; predictions thresholded at 0.5."""

    def __init__(self, base_kind="forest", base_params=None, seed=0):
        self.base_kind = base_kind
        self.base_params = dict(base_params or {})
        self.seed = seed
        self.labels_: list[str] = []
        self.models_: list = []

    def fit(self, X, tasks):
        tasks = list(tasks)
        self.labels_ = sorted(set(tasks))
        if len(self.labels_) < 2:
            raise SingleClass("one-vs-rest needs at least two task labels")
        self.models_ = []
        for i, lab in enumerate(self.labels_):
            y = np.array([1 if t == lab else 0 for t in tasks], dtype=int)
            impl = _fit_impl(self.base_kind, X, y, self.base_params,
                             _sub_seed(self.seed, i))
            self.models_.append(impl)
        return self

    def predict_proba(self, X) -> np.ndarray:
        cols = [_scores_impl(self.base_kind, impl, X) for impl in self.models_]
        return np.column_stack(cols)

    def predict_matrix(self, X) -> np.ndarray:
        return (self.predict_proba(X) >= 0.5).astype(int)

    def to_dict(self) -> dict:
        return {"base_kind": self.base_kind, "labels": self.labels_,
                "models": [m.to_dict() for m in self.models_]}

    @classmethod
    def from_dict(cls, d: dict) -> "OneVsRest":
        m = cls(base_kind=d["base_kind"])
        m.labels_ = list(d["labels"])
        m.models_ = [_IMPL_CLASSES[d["base_kind"]].from_dict(t)
                     for t in d["models"]]
        return m


# ---------------------------------------------------------------------------
# unified model surface

_IMPL_CLASSES = {
    "tree": DecisionTree,
    "forest": RandomForest,
    "boosting": GradientBoosting,
    "logistic": LogisticModel,
    "one_vs_rest": OneVsRest,
}


def _fit_impl(kind, X, y, params, seed):
    params = dict(params)
    if kind == "tree":
        impl = DecisionTree(max_depth=params.get("max_depth"),
                            min_samples_split=params.get("min_samples_split", 2))
        return impl.fit(X, y)
    if kind == "forest":
        impl = RandomForest(n_trees=params.get("n_trees", 100),
                            max_depth=params.get("max_depth"),
                            min_samples_split=params.get("min_samples_split", 2),
                            max_features=params.get("max_features", "sqrt"),
                            bootstrap=params.get("bootstrap", True),
                            seed=seed)
        return impl.fit(X, y)
    if kind == "boosting":
        impl = GradientBoosting(n_rounds=params.get("n_rounds", 100),
                                learning_rate=params.get("learning_rate", 0.1),
                                max_depth=params.get("max_depth", 3),
                                min_samples_split=params.get("min_samples_split", 2),
                                seed=seed)
        return impl.fit(X, y)
    if kind == "logistic":
        impl = LogisticModel(epochs=params.get("epochs", 500),
                             step=params.get("step", 0.5),
                             l2=params.get("l2", 1e-4))
        return impl.fit(X, y)
    if kind == "one_vs_rest":
        base = params.pop("base", "forest")
        impl = OneVsRest(base_kind=base, base_params=params, seed=seed)
        return impl.fit(X, y)
    raise ValueError(f"unknown learner kind {kind!r}")


def _scores_impl(kind, impl, X) -> np.ndarray:
    """Probability of the positive class (binary learners only)."""
    if kind == "tree" or kind == "forest":
        proba = impl.predict_proba(X)
        classes = impl.classes_.tolist()
        if 1 in classes:
            return proba[:, classes.index(1)]
        return np.zeros(np.asarray(X).shape[0])
    return impl.predict_proba1(X)


@dataclass
class Model:
    kind: str
    params: dict
    seed: int
    feature_names: list[str]
    impl: object

    def _check_width(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.feature_names):
            raise WidthMismatch(
                f"expected {len(self.feature_names)} features, got "
                f"{X.shape[1] if X.ndim == 2 else 'non-matrix'}")
        return X

    def predict(self, X) -> np.ndarray:
        X = self._check_width(X)
        if self.kind == "one_vs_rest":
            return self.impl.predict_matrix(X)
        return np.asarray(self.impl.predict(X))

    def scores(self, X) -> np.ndarray:
        X = self._check_width(X)
        if self.kind == "one_vs_rest":
            return self.impl.predict_proba(X)
        return _scores_impl(self.kind, self.impl, X)


def train(kind: str, X, y, params: Optional[dict] = None, seed: int = 0,
          feature_names: Optional[list[str]] = None) -> Model:
    X = np.asarray(X, dtype=float)
    params = dict(params or {})
    impl = _fit_impl(kind, X, y, params, seed)
    if feature_names is None:
        feature_names = [f"f{i}" for i in range(X.shape[1])]
    return Model(kind=kind, params=params, seed=seed,
                 feature_names=list(feature_names), impl=impl)


def train_tree(X, y, params=None, seed=0, feature_names=None) -> Model:
    return train("tree", X, y, params, seed, feature_names)


def train_forest(X, y, params=None, seed=0, feature_names=None) -> Model:
    return train("forest", X, y, params, seed, feature_names)


def train_boosting(X, y, params=None, seed=0, feature_names=None) -> Model:
    return train("boosting", X, y, params, seed, feature_names)


def train_logistic(X, y, params=None, seed=0, feature_names=None) -> Model:
    return train("logistic", X, y, params, seed, feature_names)


def train_one_vs_rest(X, tasks, params=None, seed=0, feature_names=None) -> Model:
    return train("one_vs_rest", X, tasks, params, seed, feature_names)


def save_model(model: Model, path) -> None:
    payload = {
        "version": MODEL_FORMAT_VERSION,
        "kind": model.kind,
        "params": model.params,
        "seed": model.seed,
        "feature_names": model.feature_names,
        "state": model.impl.to_dict(),
    }
    Path(path).write_text(json.dumps(payload))


def load_model(path) -> Model:
    payload = json.loads(Path(path).read_text())
    if payload.get("version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model version {payload.get('version')}")
    impl = _IMPL_CLASSES[payload["kind"]].from_dict(payload["state"])
    return Model(kind=payload["kind"], params=payload["params"],
                 seed=payload["seed"], feature_names=payload["feature_names"],
                 impl=impl)


# ---------------------------------------------------------------------------
# metrics

@dataclass
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    roc_auc: float
    confusion: list[list[int]]
    f1_macro: Optional[float] = None
    f1_micro: Optional[float] = None

    def as_dict(self) -> dict:
        d = {"accuracy": self.accuracy, "precision": self.precision,
             "recall": self.recall, "f1": self.f1, "roc_auc": self.roc_auc,
             "confusion": self.confusion}
        if self.f1_macro is not None:
            d["f1_macro"] = self.f1_macro
        if self.f1_micro is not None:
            d["f1_micro"] = self.f1_micro
        return d


def roc_auc_score(y_true, scores) -> float:
    """Rank-statistic AUC: P(random positive scores above random negative),
    ties counted 1/2."""
    y = np.asarray(y_true)
    s = np.asarray(scores, dtype=float)
    pos = s[y == 1]
    neg = s[y == 0]
    if len(pos) == 0 or len(neg) == 0:
        return 0.5
    order = np.argsort(s, kind="stable")
    ranks = np.empty(len(s), dtype=float)
    sorted_s = s[order]
    i = 0
    r = 1
    while i < len(s):
        j = i
        while j + 1 < len(s) and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i:j + 1]] = (r + (r + j - i)) / 2.0  # average tied ranks
        r += j - i + 1
        i = j + 1
    npos = len(pos)
    rank_sum = ranks[y == 1].sum()
    return float((rank_sum - npos * (npos + 1) / 2.0) / (npos * len(neg)))


def _prf(tp, fp, fn):
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = (2 * precision * recall / (precision + recall)
          if precision + recall else 0.0)
    return precision, recall, f1


def binary_metrics(y_true, y_pred, scores=None) -> Metrics:
    y = np.asarray(y_true, dtype=int)
    p = np.asarray(y_pred, dtype=int)
    tp = int(np.sum((y == 1) & (p == 1)))
    tn = int(np.sum((y == 0) & (p == 0)))
    fp = int(np.sum((y == 0) & (p == 1)))
    fn = int(np.sum((y == 1) & (p == 0)))
    precision, recall, f1 = _prf(tp, fp, fn)
    auc = roc_auc_score(y, scores) if scores is not None else 0.5
    return Metrics(accuracy=(tp + tn) / len(y), precision=precision,
                   recall=recall, f1=f1, roc_auc=auc,
                   confusion=[[tn, fp], [fn, tp]])


def multilabel_f1(Y_true, Y_pred) -> tuple[float, float]:
    """(macro, micro) F1 over binary indicator matrices."""
    Yt = np.asarray(Y_true, dtype=int)
    Yp = np.asarray(Y_pred, dtype=int)
    per_label = []
    tp_all = fp_all = fn_all = 0
    for j in range(Yt.shape[1]):
        tp = int(np.sum((Yt[:, j] == 1) & (Yp[:, j] == 1)))
        fp = int(np.sum((Yt[:, j] == 0) & (Yp[:, j] == 1)))
        fn = int(np.sum((Yt[:, j] == 1) & (Yp[:, j] == 0)))
        per_label.append(_prf(tp, fp, fn)[2])
        tp_all += tp
        fp_all += fp
        fn_all += fn
    macro = float(np.mean(per_label))
    micro = _prf(tp_all, fp_all, fn_all)[2]
    return macro, micro


def one_hot(tasks: list[str], label_vocab: list[str]) -> np.ndarray:
    pos = {lab: i for i, lab in enumerate(label_vocab)}
    Y = np.zeros((len(tasks), len(label_vocab)), dtype=int)
    for i, t in enumerate(tasks):
        Y[i, pos[t]] = 1
    return Y


def evaluate(model: Model, X, y_true) -> Metrics:
    """Binary evaluation; positive class is 1."""
    preds = model.predict(X)
    scores = model.scores(X)
    return binary_metrics(y_true, preds, scores)


def evaluate_multilabel(model: Model, X, tasks: list[str]) -> Metrics:
    """One-vs-rest evaluation against task names.

    accuracy/confusion come from argmax decisions (so accuracy equals
    trace(confusion)/sum); macro/micro F1 come from the 0.5-thresholded
    label matrix.
    """
    labels = model.impl.labels_
    proba = model.scores(X)
    Y_true = one_hot(tasks, labels)
    Y_pred = (proba >= 0.5).astype(int)
    macro, micro = multilabel_f1(Y_true, Y_pred)

    k = len(labels)
    pos = {lab: i for i, lab in enumerate(labels)}
    best = np.argmax(proba, axis=1)
    confusion = [[0] * k for _ in range(k)]
    for t, b in zip(tasks, best.tolist()):
        confusion[pos[t]][b] += 1
    correct = sum(confusion[i][i] for i in range(k))
    accuracy = correct / len(tasks)
    macro_p, macro_r = [], []
    for j in range(k):
        tp = int(np.sum((Y_true[:, j] == 1) & (Y_pred[:, j] == 1)))
        fp = int(np.sum((Y_true[:, j] == 0) & (Y_pred[:, j] == 1)))
        fn = int(np.sum((Y_true[:, j] == 1) & (Y_pred[:, j] == 0)))
        pr, rc, _ = _prf(tp, fp, fn)
        macro_p.append(pr)
        macro_r.append(rc)
    return Metrics(accuracy=accuracy, precision=float(np.mean(macro_p)),
                   recall=float(np.mean(macro_r)),
                   f1=macro, roc_auc=0.5, confusion=confusion,
                   f1_macro=macro, f1_micro=micro)
