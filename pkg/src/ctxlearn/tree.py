"""CART-style binary decision tree: Gini splits, batch induction, deterministic.

Induction is greedy top-down. Candidate thresholds are midpoints of
consecutive distinct sorted values; ties in Gini gain break toward the
lowest feature index, then the lowest threshold, so a fit is a pure
function of its inputs. Impure nodes may split on zero-gain candidates
(XOR-style data needs two levels before any gain appears).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class TreeNode:
    feature: int = -1  # -1 marks a leaf
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    label: int = -1
    counts: np.ndarray | None = None

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"label": self.label, "counts": [int(c) for c in self.counts]}
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }


@dataclass
class TreeClassifier:
    root: TreeNode
    n_features: int
    n_classes: int
    max_depth: int
    min_samples_split: int

    def predict(self, x: np.ndarray) -> int:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1 or x.shape[0] != self.n_features:
            raise ValueError(f"expected vector of length {self.n_features}, got shape {x.shape}")
        node = self.root
        while not node.is_leaf:
            node = node.left if x[node.feature] <= node.threshold else node.right
        return node.label

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected (n, {self.n_features}) matrix, got shape {X.shape}")
        return np.array([self.predict(row) for row in X], dtype=np.int64)

    def to_dict(self) -> dict:
        return self.root.to_dict()


def _gini(counts: np.ndarray, total: int) -> float:
    p = counts / total
    return float(1.0 - np.sum(p * p))


def _best_split(
    X: np.ndarray,
    y: np.ndarray,
    order: list[np.ndarray],
    counts: np.ndarray,
) -> tuple[int, float, int] | None:
    """Best (feature, threshold, split position in that feature's order).

    Split position k means the first k+1 rows of the feature's sorted order
    go left. Returns None when no feature has two distinct values.
    """
    n = order[0].shape[0]
    n_classes = counts.shape[0]
    parent = _gini(counts, n)
    best: tuple[int, float, int] | None = None
    best_gain = -np.inf
    for j, idx in enumerate(order):
        vals = X[idx, j]
        bounds = np.nonzero(vals[1:] != vals[:-1])[0]
        if bounds.size == 0:
            continue
        onehot = np.zeros((n, n_classes))
        onehot[np.arange(n), y[idx]] = 1.0
        cum = np.cumsum(onehot, axis=0)
        left_counts = cum[bounds]
        n_left = (bounds + 1).astype(np.float64)
        right_counts = counts - left_counts
        n_right = n - n_left
        gini_left = 1.0 - np.sum((left_counts / n_left[:, None]) ** 2, axis=1)
        gini_right = 1.0 - np.sum((right_counts / n_right[:, None]) ** 2, axis=1)
        gains = parent - (n_left * gini_left + n_right * gini_right) / n
        k = int(np.argmax(gains))  # first max: lowest threshold wins ties in-feature
        if gains[k] > best_gain:
            best_gain = float(gains[k])
            pos = int(bounds[k])
            best = (j, float((vals[pos] + vals[pos + 1]) / 2.0), pos)
    return best


def _build(
    X: np.ndarray,
    y: np.ndarray,
    order: list[np.ndarray],
    counts: np.ndarray,
    depth: int,
    max_depth: int,
    min_samples_split: int,
) -> TreeNode:
    n = order[0].shape[0]
    majority = int(np.argmax(counts))
    if (
        depth >= max_depth
        or n < min_samples_split
        or counts[majority] == n
    ):
        return TreeNode(label=majority, counts=counts.astype(np.int64))
    split = _best_split(X, y, order, counts)
    if split is None:
        return TreeNode(label=majority, counts=counts.astype(np.int64))
    feature, threshold, pos = split
    go_left = np.zeros(X.shape[0], dtype=bool)
    go_left[order[feature][: pos + 1]] = True
    left_order = [idx[go_left[idx]] for idx in order]
    right_order = [idx[~go_left[idx]] for idx in order]
    left_counts = np.bincount(y[left_order[0]], minlength=counts.shape[0]).astype(np.float64)
    right_counts = counts - left_counts
    return TreeNode(
        feature=feature,
        threshold=threshold,
        left=_build(X, y, left_order, left_counts, depth + 1, max_depth, min_samples_split),
        right=_build(X, y, right_order, right_counts, depth + 1, max_depth, min_samples_split),
    )


def fit_tree(
    X: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    max_depth: int = 12,
    min_samples_split: int = 2,
) -> TreeClassifier:
    """Induce a tree from (X, y) rows; deterministic given its inputs."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("rows must be a non-empty 2-D matrix")
    if y.shape != (X.shape[0],):
        raise ValueError("labels must be one per row")
    if y.min() < 0 or y.max() >= n_classes:
        raise ValueError(f"labels must lie in [0, {n_classes})")
    if max_depth < 1 or min_samples_split < 2:
        raise ValueError("max_depth must be >= 1 and min_samples_split >= 2")
    order = [np.argsort(X[:, j], kind="stable") for j in range(X.shape[1])]
    counts = np.bincount(y, minlength=n_classes).astype(np.float64)
    root = _build(X, y, order, counts, 0, max_depth, min_samples_split)
    return TreeClassifier(
        root=root,
        n_features=X.shape[1],
        n_classes=n_classes,
        max_depth=max_depth,
        min_samples_split=min_samples_split,
    )
