"""Gradient-boosted regression trees: a log-loss classifier whose split gains
become metric weights, and a squared-loss regressor for R2 reporting."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from metriq import kernels
from metriq.rng import SplitMix64

MAX_LOGIT = 36.0
# splits whose gain is below this fraction of the node's sum of squares are noise
GAIN_RTOL = 1e-12
IMPUTE_SCORE = 100.0


class GBMError(ValueError):
    pass


@dataclass(frozen=True)
class GBMHyper:
    T: int = 100
    eta: float = 0.1
    max_depth: int = 3
    min_leaf: int = 5

    def __post_init__(self):
        if self.T < 0:
            raise GBMError("T must be >= 0")
        if not 0 < self.eta <= 1:
            raise GBMError("eta must be in (0, 1]")
        if self.max_depth < 1 or self.min_leaf < 1:
            raise GBMError("max_depth and min_leaf must be >= 1")

    @classmethod
    def from_dict(cls, doc: Mapping) -> "GBMHyper":
        return cls(**{k: doc[k] for k in ("T", "eta", "max_depth", "min_leaf") if k in doc})


@dataclass(frozen=True)
class LabeledExample:
    features: np.ndarray
    label: int
    repo_id: str


# ---------------------------------------------------------------------------
# labels and splits
# ---------------------------------------------------------------------------


def feature_matrix(scores: Sequence[Mapping[str, float]], feature_names: Sequence[str]) -> np.ndarray:
    """Rows of per-metric scores in ``feature_names`` order; masked -> 100."""
    X = np.full((len(scores), len(feature_names)), IMPUTE_SCORE)
    for i, s in enumerate(scores):
        for j, name in enumerate(feature_names):
            v = s.get(name)
            if v is not None:
                X[i, j] = v
    return X


def make_labels(records, feature_names: Sequence[str], q: float = 0.2) -> list[LabeledExample]:
    """Top ``floor(q*n)`` repos by stars -> 1, bottom ``floor(q*n)`` -> 0.

    ``records`` holds ``(repo_id, stars, scores)`` triples.  Ties in stars go
    to the lower repo_id first.
    """
    if not 0 < q <= 0.5:
        raise GBMError(f"quantile q must be in (0, 0.5], got {q}")
    ranked = sorted(records, key=lambda r: (-r[1], r[0]))
    k = int(math.floor(q * len(ranked)))
    if k < 1:
        raise GBMError(f"{len(ranked)} records leave no examples at q={q}")
    X = feature_matrix([r[2] for r in ranked], feature_names)
    top = [LabeledExample(X[i], 1, ranked[i][0]) for i in range(k)]
    n = len(ranked)
    bottom = [LabeledExample(X[i], 0, ranked[i][0]) for i in range(n - k, n)]
    return top + bottom


def split_indices(n: int, seed: int) -> tuple[list[int], list[int]]:
    """Unstratified 4:1 split of ``range(n)``; both halves in ascending order."""
    perm = SplitMix64(seed).shuffle(list(range(n)))
    n_val = n // 5
    return sorted(perm[n_val:]), sorted(perm[:n_val])


def split_train_val(examples: Sequence[LabeledExample], seed: int):
    """Stratified 4:1 split; each class keeps ``floor(n_c/5)`` for validation.

    One stream serves both classes, positives shuffled first.  Outputs keep
    the input order.
    """
    if len(examples) < 5:
        raise GBMError(f"need at least 5 examples to split, got {len(examples)}")
    rng = SplitMix64(seed)
    val_idx = set()
    for label in (1, 0):
        members = [i for i, e in enumerate(examples) if e.label == label]
        if len(members) < 2:
            raise GBMError(f"class {label} has {len(members)} member(s); stratification needs >= 2")
        shuffled = rng.shuffle(members)
        val_idx.update(shuffled[: len(members) // 5])
    train = [e for i, e in enumerate(examples) if i not in val_idx]
    val = [e for i, e in enumerate(examples) if i in val_idx]
    return train, val


def stack(examples: Sequence[LabeledExample]) -> tuple[np.ndarray, np.ndarray]:
    X = np.vstack([e.features for e in examples]) if examples else np.empty((0, 0))
    y = np.array([e.label for e in examples], dtype=np.float64)
    return X, y


# ---------------------------------------------------------------------------
# trees
# ---------------------------------------------------------------------------


@dataclass
class RegressionTree:
    feature: np.ndarray  # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray

    @property
    def n_splits(self) -> int:
        return int(np.sum(self.feature >= 0))

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                return node
            r, n, ff = rows[inner], node[inner], f[inner]
            go_left = X[r, ff] <= self.threshold[n]
            node[inner] = np.where(go_left, self.left[n], self.right[n])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "gain": self.gain.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "RegressionTree":
        return cls(
            np.asarray(doc["feature"], dtype=np.int64),
            np.asarray(doc["threshold"], dtype=np.float64),
            np.asarray(doc["left"], dtype=np.int64),
            np.asarray(doc["right"], dtype=np.int64),
            np.asarray(doc["value"], dtype=np.float64),
            np.asarray(doc["gain"], dtype=np.float64),
        )


def build_tree(X, residual, order, hyper: GBMHyper, leaf_value) -> RegressionTree:
    """Least-squares tree on ``residual``; ``leaf_value(mask)`` sets leaf outputs.
    Nodes are numbered in pre-order."""
    feature, threshold, left, right, value, gain = [], [], [], [], [], []

    def grow(member: np.ndarray, depth: int) -> int:
        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        gain.append(0.0)
        if depth < hyper.max_depth:
            f, t, g = kernels.best_split(X, residual, order, member, hyper.min_leaf)
            if f >= 0:
                r = residual[member]
                sst = float(np.sum((r - r.mean()) ** 2))
                if g > GAIN_RTOL * sst:
                    go_left = member & (X[:, f] <= t)
                    go_right = member & ~go_left
                    feature[node], threshold[node], gain[node] = int(f), float(t), float(g)
                    left[node] = grow(go_left, depth + 1)
                    right[node] = grow(go_right, depth + 1)
                    return node
        value[node] = leaf_value(member)
        return node

    grow(np.ones(X.shape[0], dtype=bool), 0)
    return RegressionTree(
        np.array(feature, dtype=np.int64),
        np.array(threshold),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(value),
        np.array(gain),
    )


# ---------------------------------------------------------------------------
# ensembles
# ---------------------------------------------------------------------------


@dataclass
class GBMModel:
    kind: str  # "classifier" or "regressor"
    F0: float
    eta: float
    T: int
    n_features: int
    trees: list[RegressionTree] = field(default_factory=list)
    feature_names: list[str] = field(default_factory=list)
    hyper: GBMHyper = field(default_factory=GBMHyper)
    seed: int | None = None
    train_loss: list[float] = field(default_factory=list)

    def raw_score(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise GBMError(f"model expects {self.n_features} features, got {X.shape[1]}")
        F = np.full(X.shape[0], self.F0)
        for tree in self.trees:
            F += self.eta * tree.predict(X)
        return F

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "F0": self.F0,
            "eta": self.eta,
            "T": self.T,
            "n_features": self.n_features,
            "feature_names": list(self.feature_names),
            "hyper": {"T": self.hyper.T, "eta": self.hyper.eta,
                      "max_depth": self.hyper.max_depth, "min_leaf": self.hyper.min_leaf},
            "seed": self.seed,
            "train_loss": list(self.train_loss),
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "GBMModel":
        return cls(
            kind=doc["kind"],
            F0=float(doc["F0"]),
            eta=float(doc["eta"]),
            T=int(doc["T"]),
            n_features=int(doc["n_features"]),
            trees=[RegressionTree.from_dict(t) for t in doc["trees"]],
            feature_names=list(doc.get("feature_names", [])),
            hyper=GBMHyper.from_dict(doc.get("hyper", {})),
            seed=doc.get("seed"),
            train_loss=[float(v) for v in doc.get("train_loss", [])],
        )


def dump_model(model: GBMModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_dict(), fh, allow_nan=False)
        fh.write("\n")


def load_model(path) -> GBMModel:
    with open(path, encoding="utf-8") as fh:
        return GBMModel.from_dict(json.load(fh))


def sigmoid(F):
    F = np.clip(F, -MAX_LOGIT, MAX_LOGIT)
    return 1.0 / (1.0 + np.exp(-F))


def log_loss(y: np.ndarray, F: np.ndarray) -> float:
    """Mean binomial log-loss, -[y log p + (1-y) log(1-p)] with p = sigmoid(F)."""
    return float(np.mean(np.logaddexp(0.0, F) - y * F))


def _presort(X: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.argsort(X, axis=0, kind="mergesort").T)


def fit_classifier(X, y, hyper: GBMHyper = GBMHyper(), feature_names=None, seed=None) -> GBMModel:
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n1 = int(np.sum(y == 1))
    n0 = int(np.sum(y == 0))
    if n1 + n0 != y.size:
        raise GBMError("labels must be 0 or 1")
    if n1 == 0 or n0 == 0:
        raise GBMError("training data must contain both classes")
    F0 = math.log(n1 / n0)
    model = GBMModel("classifier", F0, hyper.eta, hyper.T, X.shape[1],
                     feature_names=list(feature_names or []), hyper=hyper, seed=seed)
    F = np.full(y.size, F0)
    model.train_loss.append(log_loss(y, F))
    order = _presort(X)
    for _ in range(hyper.T):
        p = sigmoid(F)
        r = y - p
        hess = p * (1.0 - p)

        def newton_step(mask, r=r, hess=hess):
            den = float(np.sum(hess[mask]))
            return float(np.sum(r[mask])) / den if den > 0 else 0.0

        tree = build_tree(X, r, order, hyper, newton_step)
        model.trees.append(tree)
        F = F + hyper.eta * tree.predict(X)
        model.train_loss.append(log_loss(y, F))
    return model


def train_gbc(train: Sequence[LabeledExample], hyper: GBMHyper = GBMHyper(), feature_names=None, seed=None) -> GBMModel:
    if not train:
        raise GBMError("empty training set")
    X, y = stack(train)
    return fit_classifier(X, y, hyper, feature_names, seed)


def fit_regressor(X, y, hyper: GBMHyper = GBMHyper(), feature_names=None, seed=None) -> GBMModel:
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y.size == 0:
        raise GBMError("empty training set")
    F0 = math.fsum(y) / y.size  # correctly rounded, so constant targets give exact residuals of 0
    model = GBMModel("regressor", F0, hyper.eta, hyper.T, X.shape[1],
                     feature_names=list(feature_names or []), hyper=hyper, seed=seed)
    F = np.full(y.size, F0)
    model.train_loss.append(float(np.mean((y - F) ** 2)))
    order = _presort(X)
    for _ in range(hyper.T):
        r = y - F

        def mean_step(mask, r=r):
            return float(np.mean(r[mask]))

        tree = build_tree(X, r, order, hyper, mean_step)
        model.trees.append(tree)
        F = F + hyper.eta * tree.predict(X)
        model.train_loss.append(float(np.mean((y - F) ** 2)))
    return model


def train_gbr(X, targets, hyper: GBMHyper = GBMHyper(), feature_names=None, seed=None) -> GBMModel:
    return fit_regressor(X, targets, hyper, feature_names, seed)


def predict_proba(model: GBMModel, m) -> np.ndarray | float:
    if model.kind != "classifier":
        raise GBMError("predict_proba needs a classifier")
    m = np.asarray(m, dtype=np.float64)
    p = sigmoid(model.raw_score(m))
    return float(p[0]) if m.ndim == 1 else p


def predict(model: GBMModel, m) -> np.ndarray | float:
    m = np.asarray(m, dtype=np.float64)
    out = model.raw_score(m)
    if model.kind == "classifier":
        out = sigmoid(out)
    return float(out[0]) if m.ndim == 1 else out


def feature_importances(model: GBMModel) -> np.ndarray:
    """Total split gain per feature across all trees, normalised to sum 1."""
    totals = np.zeros(model.n_features)
    for tree in model.trees:
        inner = tree.feature >= 0
        np.add.at(totals, tree.feature[inner], tree.gain[inner])
    total = float(np.sum(totals))
    if total <= 0:
        raise GBMError("model has no splits; importances are undefined")
    return totals / total
