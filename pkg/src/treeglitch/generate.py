"""Small model factories: random ensembles, monotone ensembles, toy examples."""
from __future__ import annotations

import numpy as np

from .ensemble import Ensemble, FeatureSpace, Node, Tree


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


class _TreeBuilder:
    def __init__(self):
        self.nodes: list[Node] = []

    def leaf(self, value) -> int:
        nid = len(self.nodes)
        self.nodes.append(Node.leaf(nid, value))
        return nid

    def split(self, feature, threshold, make_true, make_false) -> int:
        nid = len(self.nodes)
        self.nodes.append(None)  # placeholder keeps preorder ids
        t = make_true()
        f = make_false()
        self.nodes[nid] = Node.split(nid, feature, threshold, t, f)
        return nid

    def tree(self) -> Tree:
        return Tree(0, self.nodes)


def random_ensemble(seed, n_trees: int, depth: int, n_features: int,
                    leaf_range=(-1.0, 1.0), bounds=(0.0, 1.0), split_prob: float = 1.0,
                    threshold_decimals: int | None = None,
                    threshold_bins: int | None = None) -> Ensemble:
    """Random ensemble with uniform features, thresholds and leaf values.

    The leftmost path of every tree always reaches ``depth``; other nodes
    split with probability ``split_prob``.  ``threshold_bins`` draws
    thresholds from a fixed per-feature grid, the way histogram-based
    boosting libraries quantize splits.
    """
    rng = _rng(seed)
    lo, hi = bounds
    grids = None
    if threshold_bins:
        grids = [np.sort(rng.uniform(lo, hi, threshold_bins)) for _ in range(n_features)]

    def threshold(j):
        if grids is not None:
            return float(grids[j][rng.integers(threshold_bins)])
        t = float(rng.uniform(lo, hi))
        return round(t, threshold_decimals) if threshold_decimals is not None else t

    trees = []
    for _ in range(n_trees):
        b = _TreeBuilder()

        def grow(level, forced):
            if level >= depth or (not forced and rng.random() >= split_prob):
                return b.leaf(float(rng.uniform(*leaf_range)))
            j = int(rng.integers(n_features))
            return b.split(j, threshold(j), lambda: grow(level + 1, forced),
                           lambda: grow(level + 1, False))

        grow(0, True)
        trees.append(b.tree())
    names = [f"f{j}" for j in range(n_features)]
    return Ensemble(FeatureSpace(names, [bounds] * n_features), trees)


def monotone_ensemble(seed, n_trees: int, depth: int, n_features: int,
                      bounds=(0.0, 1.0)) -> Ensemble:
    """Ensemble that is monotone in every feature.

    Each tree splits on a single feature with leaf values sorted along it, and
    every feature gets one global direction, so the sum is monotone.
    """
    rng = _rng(seed)
    lo, hi = bounds
    direction = rng.choice([-1.0, 1.0], size=n_features)
    trees = []
    for _ in range(n_trees):
        j = int(rng.integers(n_features))
        n_leaves = 2 ** depth
        cuts = np.sort(rng.uniform(lo, hi, n_leaves - 1))
        values = np.cumsum(rng.uniform(0.0, 1.0, n_leaves)) * direction[j]
        b = _TreeBuilder()

        def grow(first, last):
            # leaves first..last inclusive, balanced split on the sorted cuts
            if first == last:
                return b.leaf(float(values[first]))
            mid = (first + last) // 2
            return b.split(j, float(cuts[mid]), lambda: grow(first, mid),
                           lambda: grow(mid + 1, last))

        grow(0, n_leaves - 1)
        trees.append(b.tree())
    names = [f"f{j}" for j in range(n_features)]
    return Ensemble(FeatureSpace(names, [bounds] * n_features), trees)


def stump(feature: int, threshold: float, true_value: float, false_value: float) -> Tree:
    return Tree(0, [Node.split(0, feature, threshold, 1, 2),
                    Node.leaf(1, true_value), Node.leaf(2, false_value)])


def constant_tree(value: float) -> Tree:
    return Tree(0, [Node.leaf(0, value)])


def toy_canyon() -> Ensemble:
    """Two stumps on one feature in [0, 1]: outputs 1, 0, 1 across 0.3 and 0.6."""
    return Ensemble(FeatureSpace(["v1"], [(0.0, 1.0)]),
                    [stump(0, 0.3, 1.0, 0.0), stump(0, 0.6, 0.0, 1.0)])
