"""Random forest of bootstrapped Gini CART trees."""
import math
from dataclasses import dataclass

import numpy as np

from ._common import check_query, check_training

LEAF = -1


@dataclass(frozen=True)
class Tree:
    feature: np.ndarray    # LEAF for leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray      # class-1 fraction of the training rows in the node

    def apply(self, x):
        node = np.zeros(len(x), dtype=np.intp)
        active = self.feature[node] != LEAF
        while active.any():
            idx = np.flatnonzero(active)
            nd = node[idx]
            go_left = x[idx, self.feature[nd]] <= self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])
            active[idx] = self.feature[node[idx]] != LEAF
        return node

    def predict_proba(self, x):
        return self.value[self.apply(x)]

    @property
    def n_nodes(self):
        return len(self.feature)


def _gini(n1, n):
    p = n1 / n
    return 2.0 * p * (1.0 - p)


def _best_split(x, y, features, max_features, min_leaf):
    """Lowest weighted-Gini split over the first usable features in ``features``.

    Draws past ``max_features`` only while none of the candidates so far
    admits a valid split (e.g. constant columns).
    """
    n = len(y)
    best = None
    tried = 0
    for f in features:
        if tried >= max_features and best is not None:
            break
        tried += 1
        order = np.argsort(x[:, f], kind="stable")
        xs, ys = x[order, f], y[order]
        k = np.arange(1, n)
        n1_left = np.cumsum(ys)[:-1]
        ok = (xs[1:] > xs[:-1]) & (k >= min_leaf) & (n - k >= min_leaf)
        if not ok.any():
            continue
        n1_total = ys.sum()
        imp = (k * _gini(n1_left, k) + (n - k) * _gini(n1_total - n1_left, n - k)) / n
        imp = np.where(ok, imp, np.inf)
        pos = int(np.argmin(imp))
        if best is None or imp[pos] < best[0]:
            lo, hi = xs[pos], xs[pos + 1]
            thr = 0.5 * (lo + hi)
            if not lo <= thr < hi:
                thr = lo
            best = (imp[pos], f, thr)
    return best


def grow_tree(x, y, rng, max_features, min_leaf=2):
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(rows):
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(float(y[rows].mean()))
        return len(feature) - 1

    stack = [(new_node(np.arange(len(y))), np.arange(len(y)))]
    while stack:
        node, rows = stack.pop()
        ys = y[rows]
        if ys.min() == ys.max() or len(rows) < 2 * min_leaf:
            continue
        split = _best_split(x[rows], ys, rng.permutation(x.shape[1]), max_features, min_leaf)
        if split is None:
            continue
        _, f, thr = split
        mask = x[rows, f] <= thr
        l_rows, r_rows = rows[mask], rows[~mask]
        feature[node], threshold[node] = int(f), float(thr)
        left[node] = new_node(l_rows)
        right[node] = new_node(r_rows)
        stack.append((left[node], l_rows))
        stack.append((right[node], r_rows))

    return Tree(np.array(feature), np.array(threshold), np.array(left),
                np.array(right), np.array(value))


@dataclass(frozen=True)
class ForestClassifier:
    trees: tuple
    d: int
    kind: str = "RF"

    def tree_probas(self, data):
        x = check_query(data, self.d)
        return np.stack([t.predict_proba(x) for t in self.trees])

    def predict_proba(self, data):
        return self.tree_probas(data).mean(axis=0)


def fit_rf(data, labels, n_trees: int = 100, seed=0, min_leaf: int = 2, max_features=None):
    """Bootstrap ``n_trees`` CART trees with ceil(sqrt(d)) candidate features per split.

    Each tree gets its own child seed of ``seed``, so results do not depend
    on the order trees are built in.
    """
    x, y = check_training(data, labels)
    n, d = x.shape
    m = max_features or math.ceil(math.sqrt(d))
    trees = []
    for child in np.random.SeedSequence(seed).spawn(n_trees):
        rng = np.random.default_rng(child)
        rows = rng.integers(0, n, n)
        trees.append(grow_tree(x[rows], y[rows].astype(float), rng, m, min_leaf))
    return ForestClassifier(tuple(trees), d)
