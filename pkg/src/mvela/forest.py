"""In-house random forests: CART regression (variance reduction) and
classification (Gini) with class probabilities.

Written from scratch so the behavior is pinned down to the bit: per-tree
seeds derive from (master seed, tree index), equal-gain splits break toward
the lowest feature index and then the lowest threshold, and class
probabilities are the per-leaf class proportions averaged over trees.
Fitted forests are immutable and safe to share across threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from . import _treekernels
from .errors import DataError
from .seeding import rng_for

FORMAT_VERSION = "mvela-forest/1"


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int | None = None
    min_samples_leaf: int = 1
    feature_subsample: float | str = "all"  # "all", "sqrt", or a fraction in (0,1]
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise DataError("n_trees must be >= 1")
        if self.min_samples_leaf < 1:
            raise DataError("min_samples_leaf must be >= 1")
        if isinstance(self.feature_subsample, str):
            if self.feature_subsample not in ("all", "sqrt"):
                raise DataError("feature_subsample rule must be 'all' or 'sqrt'")
        elif not 0.0 < float(self.feature_subsample) <= 1.0:
            raise DataError("feature_subsample fraction must be in (0, 1]")

    def features_per_split(self, n_features: int) -> int:
        if self.feature_subsample == "all":
            return n_features
        if self.feature_subsample == "sqrt":
            return max(1, int(math.sqrt(n_features)))
        return max(1, min(n_features, math.ceil(float(self.feature_subsample) * n_features)))


@dataclass(frozen=True)
class _Tree:
    feature: np.ndarray  # (nodes,) int; -1 marks a leaf
    threshold: np.ndarray  # (nodes,) float
    left: np.ndarray  # (nodes,) int child ids
    right: np.ndarray
    value: np.ndarray  # regression: (nodes,); classification: (nodes, n_classes) counts

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf id for each row, via vectorized level-by-level descent."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            feat = self.feature[node]
            active = feat >= 0
            if not active.any():
                return node
            rows = np.nonzero(active)[0]
            sub = node[rows]
            go_left = X[rows, self.feature[sub]] <= self.threshold[sub]
            node[rows] = np.where(go_left, self.left[sub], self.right[sub])


class _TreeBuilder:
    """Grows one CART tree depth-first (left child first).

    Reference implementation; `_treekernels.grow_tree` is the compiled twin
    that produces the same splits (leaf means may differ in the last ulp
    because numpy means use pairwise summation). Per-node candidate feature
    subsets come precomputed in `subsets`, consumed in split-search order,
    so both builders draw randomness identically.
    """

    def __init__(self, X, y_enc, params, subsets, n_classes):
        self.X = X
        self.y = y_enc  # float targets, or int class codes when n_classes > 0
        self.params = params
        self.subsets = subsets  # (max_nodes, k) int array, or None for all features
        self.subset_cursor = 0
        self.n_classes = n_classes
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.values: list = []

    def build(self, idx: np.ndarray) -> _Tree:
        root = self._new_node(idx)
        stack = [(root, idx, 0)]
        while stack:
            node_id, node_idx, depth = stack.pop()
            split = self._find_split(node_idx, depth)
            if split is None:
                continue
            f, thr, left_idx, right_idx = split
            self.feature[node_id] = f
            self.threshold[node_id] = thr
            left_id = self._new_node(left_idx)
            right_id = self._new_node(right_idx)
            self.left[node_id] = left_id
            self.right[node_id] = right_id
            # LIFO: push right first so the left subtree is built first and
            # subset consumption order is well-defined.
            stack.append((right_id, right_idx, depth + 1))
            stack.append((left_id, left_idx, depth + 1))
        value = np.array(self.values) if self.n_classes == 0 else np.vstack(self.values)
        return _Tree(
            feature=np.array(self.feature, dtype=np.int64),
            threshold=np.array(self.threshold, dtype=float),
            left=np.array(self.left, dtype=np.int64),
            right=np.array(self.right, dtype=np.int64),
            value=value,
        )

    def _new_node(self, idx: np.ndarray) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        y = self.y[idx]
        if self.n_classes == 0:
            self.values.append(float(y.mean()))
        else:
            self.values.append(np.bincount(y, minlength=self.n_classes).astype(float))
        return len(self.feature) - 1

    def _find_split(self, idx: np.ndarray, depth: int):
        n = idx.shape[0]
        leaf_min = self.params.min_samples_leaf
        if n < 2 * leaf_min or n < 2:
            return None
        if self.params.max_depth is not None and depth >= self.params.max_depth:
            return None
        y = self.y[idx]
        if self.n_classes == 0:
            if y.max() == y.min():
                return None
        elif np.all(y == y[0]):
            return None

        if self.subsets is None:
            candidates = np.arange(self.X.shape[1])
        else:
            candidates = self.subsets[self.subset_cursor]
            self.subset_cursor += 1

        best_score = -np.inf
        best = None
        for f in candidates:
            x = self.X[idx, f]
            order = np.argsort(x, kind="stable")
            xs = x[order]
            boundary = xs[:-1] < xs[1:]
            pos = np.arange(1, n)
            valid = boundary & (pos >= leaf_min) & (pos <= n - leaf_min)
            if not valid.any():
                continue
            if self.n_classes == 0:
                ys = y[order]
                cum = np.cumsum(ys)
                total = cum[-1]
                lefts = cum[:-1]
                score = lefts**2 / pos + (total - lefts) ** 2 / (n - pos)
            else:
                onehot = np.zeros((n, self.n_classes))
                onehot[np.arange(n), y[order]] = 1.0
                cum = np.cumsum(onehot, axis=0)
                lefts = cum[:-1]
                rights = cum[-1] - lefts
                score = (lefts**2).sum(axis=1) / pos + (rights**2).sum(axis=1) / (n - pos)
            score = np.where(valid, score, -np.inf)
            i = int(np.argmax(score))  # first max = lowest threshold
            if score[i] > best_score:
                a, b = xs[i], xs[i + 1]
                thr = a + (b - a) / 2.0
                if thr >= b:  # midpoint rounded up to b; fall back to the left value
                    thr = a
                best_score = float(score[i])
                best = (int(f), float(thr), idx[order[: i + 1]], idx[order[i + 1 :]])
        return best


def _validate_matrix(X, length: int | None = None):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.size == 0:
        raise DataError("training data must be a non-empty 2-D matrix")
    if not np.all(np.isfinite(X)):
        raise DataError("training data contains non-finite entries")
    if length is not None and X.shape[0] != length:
        raise DataError("X and targets disagree on the number of rows")
    return X


def _fit_trees(X, y_enc, params, n_classes):
    trees = []
    n, p = X.shape
    k = params.features_per_split(p)
    X = np.ascontiguousarray(X)
    for t in range(params.n_trees):
        rng = rng_for(params.seed, t)
        idx = rng.integers(0, n, size=n) if params.bootstrap else np.arange(n)
        if k < p:
            # One candidate subset per potential split, drawn up front so the
            # compiled and reference builders share the same random stream.
            keys = rng.random((2 * n + 1, p))
            subsets = np.sort(np.argsort(keys, axis=1)[:, :k], axis=1)
        else:
            subsets = None
        if _treekernels.HAVE_NUMBA:
            trees.append(_grow_tree_compiled(X, y_enc, params, idx, subsets, n_classes))
        else:
            trees.append(_TreeBuilder(X, y_enc, params, subsets, n_classes).build(idx))
    return tuple(trees)


def _grow_tree_compiled(X, y_enc, params, idx, subsets, n_classes):
    if n_classes == 0:
        y = np.ascontiguousarray(y_enc, dtype=float)
        codes = np.zeros(0, dtype=np.int64)
    else:
        y = np.zeros(0, dtype=float)
        codes = np.ascontiguousarray(y_enc, dtype=np.int64)
    if subsets is None:
        subsets_arr = np.zeros((0, 0), dtype=np.int64)
    else:
        subsets_arr = np.ascontiguousarray(subsets, dtype=np.int64)
    max_depth = -1 if params.max_depth is None else params.max_depth
    feature, threshold, left, right, val_reg, val_cls = _treekernels.grow_tree(
        X,
        y,
        codes,
        n_classes,
        np.ascontiguousarray(idx, dtype=np.int64),
        subsets_arr,
        subsets is not None,
        max_depth,
        params.min_samples_leaf,
    )
    value = val_reg if n_classes == 0 else val_cls
    return _Tree(
        feature=feature, threshold=threshold, left=left, right=right, value=value
    )


def _as_matrix(model_features: int, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model_features:
        raise DataError(f"expected {model_features} features, got shape {x.shape}")
    return x, single


def _pack_trees(trees: tuple[_Tree, ...], proportions: bool):
    """Concatenate tree arrays into one flat forest for the compiled kernels.

    Child ids are rebased onto the concatenated node table; leaves keep -1.
    """
    sizes = [t.feature.size for t in trees]
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    feature = np.concatenate([t.feature for t in trees])
    threshold = np.concatenate([t.threshold for t in trees])
    internal = feature >= 0
    left = np.concatenate([t.left + off for t, off in zip(trees, offsets[:-1])])
    right = np.concatenate([t.right + off for t, off in zip(trees, offsets[:-1])])
    left[~internal] = -1
    right[~internal] = -1
    if proportions:
        value = np.vstack([t.value / t.value.sum(axis=1, keepdims=True) for t in trees])
    else:
        value = np.concatenate([t.value for t in trees])
    return feature, threshold, left, right, np.ascontiguousarray(value), offsets


@dataclass(frozen=True)
class RegressionForest:
    params: ForestParams
    n_features: int
    trees: tuple[_Tree, ...] = field(repr=False)

    @cached_property
    def _packed(self):
        return _pack_trees(self.trees, proportions=False)

    def predict(self, x):
        """Mean of per-tree leaf means; scalar for a single row."""
        X, single = _as_matrix(self.n_features, x)
        if _treekernels.HAVE_NUMBA:
            acc = _treekernels.apply_regression(*self._packed, np.ascontiguousarray(X))
        else:
            acc = np.zeros(X.shape[0])
            for tree in self.trees:
                acc += tree.value[tree.apply(X)]
            acc /= len(self.trees)
        return float(acc[0]) if single else acc

    def to_json(self) -> dict:
        return _forest_json(self, kind="regression")


@dataclass(frozen=True)
class ClassificationForest:
    params: ForestParams
    n_features: int
    class_labels: tuple
    trees: tuple[_Tree, ...] = field(repr=False)

    @cached_property
    def _packed(self):
        return _pack_trees(self.trees, proportions=True)

    def predict_proba(self, x):
        """Per-leaf class proportions averaged over trees; rows sum to 1."""
        X, single = _as_matrix(self.n_features, x)
        if _treekernels.HAVE_NUMBA:
            acc = _treekernels.apply_classification(*self._packed, np.ascontiguousarray(X))
        else:
            acc = np.zeros((X.shape[0], len(self.class_labels)))
            for tree in self.trees:
                counts = tree.value[tree.apply(X)]
                acc += counts / counts.sum(axis=1, keepdims=True)
            acc /= len(self.trees)
        return acc[0] if single else acc

    def predict(self, x):
        """Argmax of predict_proba; ties break toward earlier class labels."""
        proba = self.predict_proba(x)
        if proba.ndim == 1:
            return self.class_labels[int(np.argmax(proba))]
        return [self.class_labels[int(i)] for i in np.argmax(proba, axis=1)]

    def to_json(self) -> dict:
        return _forest_json(self, kind="classification")


def fit_regression(X, y, params: ForestParams) -> RegressionForest:
    """Variance-reduction CART ensemble; deterministic under params.seed."""
    y = np.asarray(y, dtype=float)
    X = _validate_matrix(X, length=y.shape[0])
    if not np.all(np.isfinite(y)):
        raise DataError("targets contain non-finite entries")
    trees = _fit_trees(X, y, params, n_classes=0)
    return RegressionForest(params=params, n_features=X.shape[1], trees=trees)


def fit_classification(X, labels, params: ForestParams, class_labels=None) -> ClassificationForest:
    """Gini CART ensemble over arbitrary hashable labels.

    `class_labels` fixes the probability-column order (and thereby tie
    breaking); by default classes appear in order of first occurrence.
    """
    labels = list(labels)
    X = _validate_matrix(X, length=len(labels))
    if class_labels is None:
        class_labels = tuple(dict.fromkeys(labels))
    else:
        class_labels = tuple(class_labels)
        missing = set(labels) - set(class_labels)
        if missing:
            raise DataError(f"labels {sorted(missing)} not in class_labels")
    code = {label: i for i, label in enumerate(class_labels)}
    y_enc = np.array([code[label] for label in labels], dtype=np.int64)
    trees = _fit_trees(X, y_enc, params, n_classes=len(class_labels))
    return ClassificationForest(
        params=params, n_features=X.shape[1], class_labels=class_labels, trees=trees
    )


# ---------------------------------------------------------------------------
# JSON dump / restore for reproducibility audits
# ---------------------------------------------------------------------------


def _forest_json(model, kind: str) -> dict:
    return {
        "format": FORMAT_VERSION,
        "kind": kind,
        "n_features": model.n_features,
        "class_labels": list(model.class_labels) if kind == "classification" else None,
        "params": {
            "n_trees": model.params.n_trees,
            "max_depth": model.params.max_depth,
            "min_samples_leaf": model.params.min_samples_leaf,
            "feature_subsample": model.params.feature_subsample,
            "bootstrap": model.params.bootstrap,
            "seed": model.params.seed,
        },
        "trees": [
            {
                "feature": tree.feature.tolist(),
                "threshold": tree.threshold.tolist(),
                "left": tree.left.tolist(),
                "right": tree.right.tolist(),
                "value": tree.value.tolist(),
            }
            for tree in model.trees
        ],
    }


def forest_from_json(data: dict):
    if data.get("format") != FORMAT_VERSION:
        raise DataError(f"unsupported forest dump format: {data.get('format')!r}")
    params = ForestParams(**data["params"])
    trees = tuple(
        _Tree(
            feature=np.array(t["feature"], dtype=np.int64),
            threshold=np.array(t["threshold"], dtype=float),
            left=np.array(t["left"], dtype=np.int64),
            right=np.array(t["right"], dtype=np.int64),
            value=np.array(t["value"], dtype=float),
        )
        for t in data["trees"]
    )
    if data["kind"] == "regression":
        return RegressionForest(params=params, n_features=data["n_features"], trees=trees)
    return ClassificationForest(
        params=params,
        n_features=data["n_features"],
        class_labels=tuple(data["class_labels"]),
        trees=trees,
    )


def save_forest(model, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model.to_json()))


def load_forest(path: str | Path):
    return forest_from_json(json.loads(Path(path).read_text()))
