"""Evaluation metrics, each with a deterministic, brute-force-checkable
definition: Spearman, seeded k-means, clustering agreement (V-measure,
NMI, AMI, pairwise Jaccard, exact matching), a full-batch logistic
classifier, and the ranking metrics AP / MAP / nDCG.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import gammaln

from .errors import (
    ConfigError,
    DegenerateInputError,
    NumericError,
    ShapeError,
    UndefinedMetricError,
)


# ---------------------------------------------------------------------------
# rank correlation


def rankdata(x) -> np.ndarray:
    """Fractional ranks (1-based, ties get the average rank)."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x), dtype=np.float64)
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(x, y) -> float:
    """Pearson correlation of fractional ranks."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 2:
        raise ShapeError("spearman needs two equal-length 1-D arrays with n >= 2")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise NumericError("spearman inputs must be finite")
    rx = rankdata(x)
    ry = rankdata(y)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = np.sqrt((rx @ rx) * (ry @ ry))
    if denom == 0.0:
        raise DegenerateInputError("spearman undefined for a constant vector")
    return float(np.clip(rx @ ry / denom, -1.0, 1.0))


# ---------------------------------------------------------------------------
# clustering


@dataclass
class Partition:
    assignments: list[int]

    @property
    def n(self) -> int:
        return len(self.assignments)


class SeededKMeans:
    """Deterministic k-means with k-means++ initialization.

    Lloyd iterations run to an assignment fixpoint or max_iter; empty
    clusters are re-seeded from the point farthest from its center.
    sklearn-style estimator surface (fit / predict / get_params).
    """

    def __init__(self, n_clusters: int = 8, seed: int = 0, max_iter: int = 300):
        self.n_clusters = n_clusters
        self.seed = seed
        self.max_iter = max_iter

    def get_params(self, deep: bool = True) -> dict:
        return {"n_clusters": self.n_clusters, "seed": self.seed, "max_iter": self.max_iter}

    def set_params(self, **params) -> "SeededKMeans":
        for k, v in params.items():
            if not hasattr(self, k):
                raise ConfigError(f"unknown parameter {k!r}")
            setattr(self, k, v)
        return self

    def _init_centers(self, X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        n = len(X)
        centers = np.empty((self.n_clusters, X.shape[1]), dtype=np.float64)
        centers[0] = X[rng.integers(n)]
        d2 = np.sum((X - centers[0]) ** 2, axis=1)
        for c in range(1, self.n_clusters):
            total = d2.sum()
            if total == 0.0:
                centers[c] = X[rng.integers(n)]
                continue
            r = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(d2), r, side="right"))
            idx = min(idx, n - 1)
            centers[c] = X[idx]
            d2 = np.minimum(d2, np.sum((X - centers[c]) ** 2, axis=1))
        return centers

    def fit(self, X, y=None) -> "SeededKMeans":
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise ShapeError("kmeans expects a 2-D point matrix")
        if not np.all(np.isfinite(X)):
            raise NumericError("kmeans points must be finite")
        if self.n_clusters > len(X):
            raise ShapeError(f"k={self.n_clusters} exceeds n={len(X)}")
        rng = np.random.default_rng(self.seed)
        centers = self._init_centers(X, rng)
        labels = np.full(len(X), -1, dtype=np.int64)
        for _ in range(self.max_iter):
            dists = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
            new_labels = np.argmin(dists, axis=1)
            for c in range(self.n_clusters):
                members = new_labels == c
                if not np.any(members):
                    # re-seed from the point farthest from its assigned center;
                    # with zero spread the cluster stays empty (degenerate data)
                    assigned = dists[np.arange(len(X)), new_labels]
                    far = int(np.argmax(assigned))
                    if assigned[far] == 0.0:
                        continue
                    centers[c] = X[far]
                    new_labels[far] = c
                    members = new_labels == c
                centers[c] = X[members].mean(axis=0)
            if np.array_equal(new_labels, labels):
                break
            labels = new_labels
        self.cluster_centers_ = centers
        self.labels_ = labels
        dists = ((X - centers[labels]) ** 2).sum(axis=1)
        self.inertia_ = float(dists.sum())
        return self

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        dists = ((X[:, None, :] - self.cluster_centers_[None, :, :]) ** 2).sum(axis=2)
        return np.argmin(dists, axis=1)

    def fit_predict(self, X, y=None) -> np.ndarray:
        return self.fit(X).labels_


def kmeans(points, k: int, seed: int = 0) -> Partition:
    labels = SeededKMeans(n_clusters=k, seed=seed).fit_predict(np.asarray(points))
    return Partition(assignments=[int(c) for c in labels])


def _contingency(a: Partition, b: Partition) -> np.ndarray:
    if a.n != b.n:
        raise ShapeError(f"partitions differ in size: {a.n} vs {b.n}")
    if a.n == 0:
        raise ShapeError("empty partitions")
    _, ai = np.unique(a.assignments, return_inverse=True)
    _, bi = np.unique(b.assignments, return_inverse=True)
    m = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(m, (ai, bi), 1)
    return m


def _entropy(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def _mutual_info(m: np.ndarray) -> float:
    n = m.sum()
    mi = 0.0
    a = m.sum(axis=1)
    b = m.sum(axis=0)
    for i in range(m.shape[0]):
        for j in range(m.shape[1]):
            if m[i, j] > 0:
                mi += (m[i, j] / n) * np.log(n * m[i, j] / (a[i] * b[j]))
    return float(max(mi, 0.0))


def v_measure(predicted: Partition, truth: Partition) -> float:
    """Harmonic mean of homogeneity and completeness (base-e entropies)."""
    m = _contingency(truth, predicted)  # rows: classes, cols: clusters
    h_c = _entropy(m.sum(axis=1))
    h_k = _entropy(m.sum(axis=0))
    mi = _mutual_info(m)
    homogeneity = 1.0 if h_c == 0.0 else mi / h_c
    completeness = 1.0 if h_k == 0.0 else mi / h_k
    if homogeneity + completeness == 0.0:
        return 0.0
    return 2.0 * homogeneity * completeness / (homogeneity + completeness)


def nmi(a: Partition, b: Partition) -> float:
    """Mutual information normalized by the arithmetic mean of entropies."""
    m = _contingency(a, b)
    ha = _entropy(m.sum(axis=1))
    hb = _entropy(m.sum(axis=0))
    if ha == 0.0 and hb == 0.0:
        return 1.0
    mean_h = (ha + hb) / 2.0
    if mean_h == 0.0:
        return 0.0
    return float(np.clip(_mutual_info(m) / mean_h, 0.0, 1.0))


def _expected_mutual_info(a_counts: np.ndarray, b_counts: np.ndarray, n: int) -> float:
    # permutation-model expectation of MI over the hypergeometric distribution
    emi = 0.0
    lg = gammaln
    for ai in a_counts:
        for bj in b_counts:
            lo = max(1, ai + bj - n)
            hi = min(ai, bj)
            for nij in range(lo, hi + 1):
                log_p = (
                    lg(ai + 1)
                    + lg(bj + 1)
                    + lg(n - ai + 1)
                    + lg(n - bj + 1)
                    - lg(n + 1)
                    - lg(nij + 1)
                    - lg(ai - nij + 1)
                    - lg(bj - nij + 1)
                    - lg(n - ai - bj + nij + 1)
                )
                emi += (nij / n) * np.log(n * nij / (ai * bj)) * np.exp(log_p)
    return float(emi)


def ami(a: Partition, b: Partition) -> float:
    """Adjusted mutual information with the permutation-model expectation,
    normalized by the arithmetic mean of entropies."""
    m = _contingency(a, b)
    n = int(m.sum())
    ha = _entropy(m.sum(axis=1))
    hb = _entropy(m.sum(axis=0))
    if ha == 0.0 and hb == 0.0:
        return 1.0
    mi = _mutual_info(m)
    emi = _expected_mutual_info(m.sum(axis=1), m.sum(axis=0), n)
    denom = (ha + hb) / 2.0 - emi
    if denom == 0.0:
        return 1.0 if mi == emi else 0.0
    return float((mi - emi) / denom)


def jaccard_pairs(a: Partition, b: Partition) -> float:
    """Overlap of co-clustered point pairs between the two partitions."""
    m = _contingency(a, b)

    def pairs(counts):
        counts = counts.astype(np.int64)
        return int((counts * (counts - 1) // 2).sum())

    both = pairs(m.ravel())
    in_a = pairs(m.sum(axis=1))
    in_b = pairs(m.sum(axis=0))
    union = in_a + in_b - both
    if union == 0:
        return 1.0
    return both / union


def exact_match(a: Partition, b: Partition) -> float:
    """Best contingency alignment matched fraction, as a percentage."""
    m = _contingency(a, b)
    rows, cols = linear_sum_assignment(-m)
    return float(m[rows, cols].sum()) / a.n * 100.0


# ---------------------------------------------------------------------------
# classification


class GradientLogisticClassifier:
    """Multinomial logistic regression by deterministic full-batch gradient
    descent: zero-initialized, features standardized by train-set mean/std,
    lr 0.1, 1000 epochs, L2 1e-4 on weights (not bias)."""

    def __init__(self, lr: float = 0.1, epochs: int = 1000, l2: float = 1e-4):
        self.lr = lr
        self.epochs = epochs
        self.l2 = l2

    def get_params(self, deep: bool = True) -> dict:
        return {"lr": self.lr, "epochs": self.epochs, "l2": self.l2}

    def set_params(self, **params) -> "GradientLogisticClassifier":
        for k, v in params.items():
            if not hasattr(self, k):
                raise ConfigError(f"unknown parameter {k!r}")
            setattr(self, k, v)
        return self

    def fit(self, X, y) -> "GradientLogisticClassifier":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y)
        if X.ndim != 2 or len(X) != len(y):
            raise ShapeError("X must be 2-D with one label per row")
        if not np.all(np.isfinite(X)):
            raise NumericError("features must be finite")
        self.classes_, yi = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise DegenerateInputError("training set has a single class")
        self.mean_ = X.mean(axis=0)
        std = X.std(axis=0)
        self.std_ = np.where(std == 0.0, 1.0, std)
        Z = (X - self.mean_) / self.std_
        n, d = Z.shape
        c = len(self.classes_)
        onehot = np.eye(c)[yi]
        self.W_ = np.zeros((d, c))
        self.b_ = np.zeros(c)
        for _ in range(self.epochs):
            logits = Z @ self.W_ + self.b_
            logits -= logits.max(axis=1, keepdims=True)
            p = np.exp(logits)
            p /= p.sum(axis=1, keepdims=True)
            g = (p - onehot) / n
            self.W_ -= self.lr * (Z.T @ g + self.l2 * self.W_)
            self.b_ -= self.lr * g.sum(axis=0)
        return self

    def predict(self, X) -> np.ndarray:
        Z = (np.asarray(X, dtype=np.float64) - self.mean_) / self.std_
        return self.classes_[np.argmax(Z @ self.W_ + self.b_, axis=1)]


def train_logreg(train_X, train_y) -> GradientLogisticClassifier:
    return GradientLogisticClassifier().fit(train_X, train_y)


def classify(clf: GradientLogisticClassifier, X) -> np.ndarray:
    return clf.predict(X)


def accuracy(pred, gold) -> float:
    pred = np.asarray(pred)
    gold = np.asarray(gold)
    if pred.shape != gold.shape or len(pred) == 0:
        raise ShapeError("accuracy needs equal-length non-empty label arrays")
    return float(np.mean(pred == gold))


# ---------------------------------------------------------------------------
# ranking


def _descending_order(scores: np.ndarray) -> np.ndarray:
    # stable sort on -scores: ties keep original index order
    return np.argsort(-scores, kind="stable")


def average_precision(scores, binary_labels) -> float:
    """Mean over positives of precision at that positive's rank."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(binary_labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ShapeError("scores and labels must be equal-length 1-D arrays")
    if not np.any(labels == 1):
        raise UndefinedMetricError("average precision undefined with no positives")
    order = _descending_order(scores)
    ranked = labels[order]
    hits = 0
    total = 0.0
    for rank, rel in enumerate(ranked, start=1):
        if rel == 1:
            hits += 1
            total += hits / rank
    return total / hits


def mean_average_precision(queries) -> float:
    """Unweighted mean of per-query APs over (scores, labels) pairs."""
    queries = list(queries)
    if not queries:
        raise UndefinedMetricError("MAP needs at least one query")
    return float(np.mean([average_precision(s, l) for s, l in queries]))


def ndcg_at_k(scores, gains, k: int) -> float:
    """DCG/IDCG with gain / log2(rank + 1), ranks starting at 1."""
    scores = np.asarray(scores, dtype=np.float64)
    gains = np.asarray(gains, dtype=np.float64)
    if scores.shape != gains.shape or scores.ndim != 1:
        raise ShapeError("scores and gains must be equal-length 1-D arrays")
    if k < 1:
        raise ConfigError("k must be >= 1")
    discounts = 1.0 / np.log2(np.arange(2, k + 2))

    def dcg(ordered):
        top = ordered[:k]
        return float((top * discounts[: len(top)]).sum())

    ideal = dcg(np.sort(gains)[::-1])
    if ideal == 0.0:
        raise UndefinedMetricError("nDCG undefined when all gains are zero")
    return dcg(gains[_descending_order(scores)]) / ideal
