"""Decision trees, additive ensembles, and model-file I/O.

A tree routes a point ``x`` to the ``true`` child of an internal node when
``x[feature] <= threshold`` and to the ``false`` child otherwise.  The ensemble
output is the plain sum of the reached leaf values (the raw margin).
"""
from __future__ import annotations

import bisect
import json
import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class ModelError(ValueError):
    """Raised for malformed trees, ensembles and model files."""


class StructureError(ModelError):
    pass


@dataclass(frozen=True)
class FeatureSpace:
    names: tuple[str, ...]
    bounds: tuple[tuple[float, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(str(n) for n in self.names))
        object.__setattr__(
            self, "bounds", tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        )
        if len(self.names) != len(self.bounds):
            raise ModelError("one bound interval is required per feature")
        if any(not n for n in self.names):
            raise ModelError("feature names must be nonempty")
        if len(set(self.names)) != len(self.names):
            raise ModelError("feature names must be unique")
        for name, (lo, hi) in zip(self.names, self.bounds):
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                raise ModelError(f"invalid bounds [{lo}, {hi}] for feature {name!r}")

    def __len__(self) -> int:
        return len(self.names)

    def index(self, feature: int | str) -> int:
        """Resolve a feature given by index, index string or name."""
        if isinstance(feature, (int, np.integer)):
            i = int(feature)
        elif feature in self.names:
            return self.names.index(feature)
        elif re.fullmatch(r"-?\d+", str(feature)):
            i = int(feature)
        else:
            raise ModelError(f"unknown feature {feature!r}")
        if not 0 <= i < len(self.names):
            raise ModelError(f"feature index {i} out of range")
        return i

    def range(self, i: int) -> float:
        lo, hi = self.bounds[i]
        return hi - lo

    def contains(self, x: Sequence[float]) -> bool:
        return len(x) == len(self) and all(
            lo <= v <= hi for v, (lo, hi) in zip(x, self.bounds)
        )


@dataclass(frozen=True)
class Node:
    id: int
    feature: int | None = None
    threshold: float | None = None
    true_child: int | None = None
    false_child: int | None = None
    value: float | None = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    @classmethod
    def leaf(cls, id: int, value: float) -> "Node":
        return cls(id=int(id), value=float(value))

    @classmethod
    def split(cls, id: int, feature: int, threshold: float, true_child: int,
              false_child: int) -> "Node":
        return cls(id=int(id), feature=int(feature), threshold=float(threshold),
                   true_child=int(true_child), false_child=int(false_child))


@dataclass(frozen=True, eq=False)
class Tree:
    root: int
    nodes: tuple[Node, ...]

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        by_id: dict[int, Node] = {}
        for n in self.nodes:
            if n.id in by_id:
                raise StructureError(f"duplicate node id {n.id}")
            by_id[n.id] = n
        if self.root not in by_id:
            raise StructureError(f"root {self.root} is not a node")
        parents: dict[int, int] = {}
        for n in self.nodes:
            if n.is_leaf:
                if n.value is None or not math.isfinite(n.value):
                    raise StructureError(f"leaf {n.id} has no finite value")
                continue
            if n.threshold is None or not math.isfinite(n.threshold):
                raise StructureError(f"node {n.id} has no finite threshold")
            if n.true_child == n.false_child:
                raise StructureError(f"node {n.id} has identical children")
            for c in (n.true_child, n.false_child):
                if c not in by_id:
                    raise StructureError(f"node {n.id} references missing child {c}")
                if c in parents or c == self.root:
                    raise StructureError(f"node {c} has more than one parent")
                parents[c] = n.id
        # single parent per node + every node reachable from root => rooted tree
        seen = set()
        stack = [self.root]
        while stack:
            nid = stack.pop()
            seen.add(nid)
            n = by_id[nid]
            if not n.is_leaf:
                stack.extend((n.true_child, n.false_child))
        if len(seen) != len(by_id):
            unreachable = sorted(set(by_id) - seen)
            raise StructureError(f"nodes {unreachable} are unreachable from the root")
        object.__setattr__(self, "_by_id", by_id)

    def node(self, nid: int) -> Node:
        return self._by_id[nid]

    @property
    def internal_nodes(self) -> list[Node]:
        return [n for n in self.nodes if not n.is_leaf]

    @property
    def leaves(self) -> list[Node]:
        return [n for n in self.nodes if n.is_leaf]

    @cached_property
    def depth(self) -> int:
        def _depth(nid):
            n = self._by_id[nid]
            if n.is_leaf:
                return 0
            return 1 + max(_depth(n.true_child), _depth(n.false_child))

        return _depth(self.root)

    def features(self) -> set[int]:
        return {n.feature for n in self.nodes if not n.is_leaf}

    def leaves_under(self, nid: int) -> list[int]:
        """Ids of the leaves in the subtree rooted at ``nid`` (left to right)."""
        out, stack = [], [nid]
        while stack:
            n = self._by_id[stack.pop()]
            if n.is_leaf:
                out.append(n.id)
            else:
                stack.append(n.false_child)
                stack.append(n.true_child)
        return out

    def path(self, x: Sequence[float]) -> list[int]:
        nid = self.root
        out = [nid]
        n = self._by_id[nid]
        while not n.is_leaf:
            nid = n.true_child if x[n.feature] <= n.threshold else n.false_child
            out.append(nid)
            n = self._by_id[nid]
        return out

    def evaluate(self, x: Sequence[float]) -> float:
        return self._by_id[self.path(x)[-1]].value

    @cached_property
    def _arrays(self):
        index = {n.id: k for k, n in enumerate(self.nodes)}
        feat = np.array([-1 if n.is_leaf else n.feature for n in self.nodes], dtype=np.intp)
        thr = np.array([0.0 if n.is_leaf else n.threshold for n in self.nodes])
        tc = np.array([k if n.is_leaf else index[n.true_child]
                       for k, n in enumerate(self.nodes)], dtype=np.intp)
        fc = np.array([k if n.is_leaf else index[n.false_child]
                       for k, n in enumerate(self.nodes)], dtype=np.intp)
        val = np.array([n.value if n.is_leaf else 0.0 for n in self.nodes])
        return index[self.root], feat, thr, tc, fc, val

    def leaf_index_batch(self, X: np.ndarray) -> np.ndarray:
        """Positions (into ``nodes``) of the leaves reached by each row of ``X``."""
        root, feat, thr, tc, fc, _ = self._arrays
        idx = np.full(X.shape[0], root, dtype=np.intp)
        rows = np.arange(X.shape[0])
        for _ in range(self.depth):
            f = feat[idx]
            internal = f >= 0
            go_true = X[rows, np.where(internal, f, 0)] <= thr[idx]
            idx = np.where(internal, np.where(go_true, tc[idx], fc[idx]), idx)
        return idx

    def evaluate_batch(self, X: np.ndarray) -> np.ndarray:
        return self._arrays[5][self.leaf_index_batch(X)]


@dataclass(frozen=True, eq=False)
class Ensemble:
    """An additive tree ensemble over a bounded feature space.

    Instances are immutable and may be shared between workers.
    """

    feature_space: FeatureSpace
    trees: tuple[Tree, ...]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "trees", tuple(self.trees))
        m = len(self.feature_space)
        for t, tree in enumerate(self.trees):
            for n in tree.internal_nodes:
                if not 0 <= n.feature < m:
                    raise StructureError(
                        f"tree {t} node {n.id} uses feature {n.feature}, "
                        f"but only {m} features exist")

    @property
    def n_features(self) -> int:
        return len(self.feature_space)

    @property
    def max_depth(self) -> int:
        return max((t.depth for t in self.trees), default=0)

    def _check_point(self, x) -> None:
        if len(x) != self.n_features:
            raise ModelError(f"expected {self.n_features} feature values, got {len(x)}")

    def evaluate(self, x: Sequence[float]) -> float:
        self._check_point(x)
        return float(sum(t.evaluate(x) for t in self.trees))

    __call__ = evaluate

    def evaluate_batch(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ModelError(f"expected an (n, {self.n_features}) array")
        out = np.zeros(X.shape[0])
        for t in self.trees:
            out += t.evaluate_batch(X)
        return out

    def thresholds_on_dimension(self, i: int) -> list[tuple[float, int]]:
        """All distinct ``(threshold, tree index)`` pairs splitting on feature ``i``."""
        if not 0 <= i < self.n_features:
            raise ModelError(f"feature index {i} out of range")
        pairs = {(n.threshold, t) for t, tree in enumerate(self.trees)
                 for n in tree.internal_nodes if n.feature == i}
        return sorted(pairs)

    def split_values(self, i: int) -> list[float]:
        """Sorted distinct thresholds on feature ``i`` over all trees."""
        return sorted({thr for thr, _ in self.thresholds_on_dimension(i)})

    def sub_ensemble(self, tree_indices: Iterable[int]) -> "Ensemble":
        return Ensemble(self.feature_space, [self.trees[k] for k in tree_indices],
                        dict(self.metadata))

    def leaf_value_range(self) -> tuple[float, float]:
        """Lower and upper bounds on the ensemble output."""
        lo = sum(min(n.value for n in t.leaves) for t in self.trees)
        hi = sum(max(n.value for n in t.leaves) for t in self.trees)
        return lo, hi


def evaluate_tree(tree: Tree, x: Sequence[float]) -> float:
    return tree.evaluate(x)


def evaluate_ensemble(m: Ensemble, x: Sequence[float]) -> float:
    return m.evaluate(x)


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.asarray(z, dtype=float)))


def cell_index(breakpoints: Sequence[float], v: float) -> int:
    """Index of the cell ``(b[k-1], b[k]]`` containing ``v``."""
    return bisect.bisect_left(breakpoints, v)


# -- defaults -----------------------------------------------------------------

def default_bounds(thresholds: Sequence[float], normalized: bool = False) -> tuple[float, float]:
    if normalized:
        return (0.0, 1.0)
    if not thresholds:
        return (0.0, 1.0)
    return (min(thresholds) - 1.0, max(thresholds) + 1.0)


def _feature_thresholds(trees: Sequence[Tree], m: int) -> list[list[float]]:
    out: list[list[float]] = [[] for _ in range(m)]
    for tree in trees:
        for n in tree.internal_nodes:
            if 0 <= n.feature < m:
                out[n.feature].append(n.threshold)
    return out


# -- native JSON format ---------------------------------------------------------

def _field(obj: dict, key: str, where: str):
    if key not in obj:
        raise ModelError(f"{where}: missing field {key!r}")
    return obj[key]


def _num(v, where: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ModelError(f"{where}: expected a number, got {v!r}")
    return float(v)


def ensemble_from_dict(doc: dict, normalized: bool = False) -> Ensemble:
    if not isinstance(doc, dict):
        raise ModelError("model document must be a JSON object")
    feats = _field(doc, "features", "model")
    if not isinstance(feats, list):
        raise ModelError("model: 'features' must be a list")
    names = []
    for k, f in enumerate(feats):
        if isinstance(f, str):
            f = {"name": f}
        names.append(str(_field(f, "name", f"features[{k}]")))
    name_index = {n: k for k, n in enumerate(names)}

    trees = []
    for t, tdoc in enumerate(_field(doc, "trees", "model")):
        where = f"trees[{t}]"
        nodes = []
        for k, ndoc in enumerate(_field(tdoc, "nodes", where)):
            nw = f"{where}.nodes[{k}]"
            nid = int(_field(ndoc, "id", nw))
            if "leaf" in ndoc:
                nodes.append(Node.leaf(nid, _num(ndoc["leaf"], nw + ".leaf")))
                continue
            feat = _field(ndoc, "feature", nw)
            if isinstance(feat, str):
                if feat not in name_index:
                    raise ModelError(f"{nw}: unknown feature {feat!r}")
                feat = name_index[feat]
            elif isinstance(feat, bool) or not isinstance(feat, int):
                raise ModelError(f"{nw}: bad feature reference {feat!r}")
            if not 0 <= feat < len(names):
                raise ModelError(f"{nw}: unknown feature index {feat}")
            nodes.append(Node.split(nid, feat, _num(_field(ndoc, "threshold", nw), nw),
                                    int(_field(ndoc, "true", nw)),
                                    int(_field(ndoc, "false", nw))))
        try:
            trees.append(Tree(int(_field(tdoc, "root", where)), nodes))
        except StructureError as exc:
            raise StructureError(f"{where}: {exc}") from None

    per_feature = _feature_thresholds(trees, len(names))
    bounds = []
    for k, f in enumerate(feats):
        if isinstance(f, dict) and "lo" in f and "hi" in f:
            bounds.append((_num(f["lo"], f"features[{k}].lo"), _num(f["hi"], f"features[{k}].hi")))
        else:
            bounds.append(default_bounds(per_feature[k], normalized))
    return Ensemble(FeatureSpace(names, bounds), trees, dict(doc.get("metadata", {})))


def ensemble_to_dict(m: Ensemble) -> dict:
    doc: dict = {
        "features": [{"name": n, "lo": lo, "hi": hi}
                     for n, (lo, hi) in zip(m.feature_space.names, m.feature_space.bounds)],
        "trees": [],
    }
    for tree in m.trees:
        nodes = []
        for n in tree.nodes:
            if n.is_leaf:
                nodes.append({"id": n.id, "leaf": n.value})
            else:
                nodes.append({"id": n.id, "feature": n.feature, "threshold": n.threshold,
                              "true": n.true_child, "false": n.false_child})
        doc["trees"].append({"root": tree.root, "nodes": nodes})
    if m.metadata:
        doc["metadata"] = m.metadata
    return doc


def save_ensemble(m: Ensemble, path) -> None:
    text = json.dumps(ensemble_to_dict(m), indent=1, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


# -- XGBoost JSON dump ------------------------------------------------------------

XGB_CONVENTION = "xgboost: yes-branch taken when v < t; loaded as v <= t"


def _xgb_tree(tdoc: dict, where: str, resolve) -> Tree:
    nodes: list[Node] = []
    stack = [(tdoc, where)]
    while stack:
        n, w = stack.pop()
        if not isinstance(n, dict):
            raise ModelError(f"{w}: expected an object")
        nid = int(_field(n, "nodeid", w))
        if "leaf" in n:
            nodes.append(Node.leaf(nid, _num(n["leaf"], w + ".leaf")))
            continue
        if "split_condition" not in n:
            raise ModelError(f"{w}: split without split_condition (categorical/indicator "
                             "splits are not supported)")
        yes, no = int(_field(n, "yes", w)), int(_field(n, "no", w))
        if "missing" in n and int(n["missing"]) not in (yes, no):
            raise ModelError(f"{w}: missing-value branch {n['missing']} is neither "
                             "the yes nor the no child")
        children = {int(_field(c, "nodeid", w + ".children")): c
                    for c in _field(n, "children", w)}
        for c in (yes, no):
            if c not in children:
                raise StructureError(f"{w}: child {c} not present in 'children'")
        nodes.append(Node.split(nid, resolve(n["split"], w),
                                _num(n["split_condition"], w + ".split_condition"),
                                yes, no))
        stack.append((children[no], f"{w}/{no}"))
        stack.append((children[yes], f"{w}/{yes}"))
    nodes.sort(key=lambda node: node.id)
    try:
        return Tree(int(tdoc.get("nodeid", 0)), nodes)
    except StructureError as exc:
        raise StructureError(f"{where}: {exc}") from None


def ensemble_from_xgboost_dump(dump, feature_names: Sequence[str] | None = None,
                               normalized: bool = False) -> Ensemble:
    """Build an ensemble from XGBoost's ``get_dump(dump_format="json")`` output.

    ``dump`` is a list of tree objects (or of JSON strings, as ``get_dump``
    returns them).  Splits named ``f<k>`` map to feature ``k`` unless
    ``feature_names`` is given.
    """
    if not isinstance(dump, list):
        raise ModelError("xgboost dump must be a JSON array of trees")
    names = list(feature_names) if feature_names else None
    seen_idx: set[int] = set()

    def resolve(split, w):
        if names is not None:
            if split in names:
                return names.index(split)
            raise ModelError(f"{w}: unknown feature {split!r}")
        mt = re.fullmatch(r"f(\d+)", str(split))
        if not mt:
            raise ModelError(f"{w}: cannot map split {split!r} to a feature index; "
                             "pass feature names")
        seen_idx.add(int(mt.group(1)))
        return int(mt.group(1))

    trees = []
    for t, tdoc in enumerate(dump):
        if isinstance(tdoc, str):
            try:
                tdoc = json.loads(tdoc)
            except json.JSONDecodeError as exc:
                raise ModelError(f"tree {t}: {exc}") from None
        trees.append(_xgb_tree(tdoc, f"tree[{t}]", resolve))
    if names is None:
        names = [f"f{k}" for k in range(max(seen_idx, default=-1) + 1)]
    per_feature = _feature_thresholds(trees, len(names))
    bounds = [default_bounds(th, normalized) for th in per_feature]
    return Ensemble(FeatureSpace(names, bounds), trees,
                    {"source_format": "xgboost-dump", "split_convention": XGB_CONVENTION})


def load_ensemble(path, format: str = "native", normalized: bool = False,
                  feature_names: Sequence[str] | None = None) -> Ensemble:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if format == "native":
        return ensemble_from_dict(doc, normalized=normalized)
    if format in ("xgboost", "xgboost-dump"):
        return ensemble_from_xgboost_dump(doc, feature_names, normalized=normalized)
    raise ModelError(f"unknown model format {format!r}")
