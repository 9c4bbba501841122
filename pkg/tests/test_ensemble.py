import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from treeglitch.ensemble import (Ensemble, FeatureSpace, ModelError, Node, StructureError, Tree,
                                 cell_index, default_bounds, ensemble_from_xgboost_dump,
                                 ensemble_to_dict, evaluate_ensemble, evaluate_tree,
                                 load_ensemble, save_ensemble)
from treeglitch.oracle import breakpoints_in, cell_representatives
from treeglitch.generate import constant_tree, random_ensemble, stump
from treeglitch.satgen import CnfFormula, reduce


def test_single_leaf_tree():
    assert evaluate_tree(constant_tree(0.7), [0.1, 5.0]) == 0.7


def test_boundary_takes_true_branch():
    t = stump(0, 0.3, 1.0, 0.0)
    assert evaluate_tree(t, [0.3]) == 1.0
    assert evaluate_tree(t, [np.nextafter(0.3, 1)]) == 0.0


def test_empty_ensemble_is_zero():
    m = Ensemble(FeatureSpace(["a"], [(0, 1)]), [])
    assert evaluate_ensemble(m, [0.4]) == 0.0


def test_additivity_of_two_trees():
    m = Ensemble(FeatureSpace(["a"], [(0, 1)]), [constant_tree(1.0), constant_tree(0.0)])
    assert m([0.2]) == 1.0


def test_toy_canyon_at_half(toy):
    assert toy([0.5]) == 0.0
    assert toy.thresholds_on_dimension(0) == [(0.3, 0), (0.6, 1)]


def test_reduction_tree_evaluation_from_figure():
    red = reduce(CnfFormula(3, [(-1, 2, -3)]))
    left = red.ensemble.trees[0]
    # r = 0.6 takes the false branch to the clause subtree; a true, b true -> 1
    assert evaluate_tree(left, [0.0, 0.5, 0.0, 0.6]) == 1.0


def test_reduction_thresholds_on_r():
    red = reduce(CnfFormula(3, [(-1, 2, -3)]), epsilon=0.25)
    assert red.ensemble.thresholds_on_dimension(red.dim) == [(-0.5, 1), (0.25, 0)]


def test_no_split_gives_empty_thresholds():
    m = Ensemble(FeatureSpace(["a", "b"], [(0, 1), (0, 1)]), [stump(0, 0.5, 1, 2)])
    assert m.thresholds_on_dimension(1) == []


@pytest.mark.parametrize("nodes,msg", [
    ([Node.split(0, 0, 0.5, 1, 2), Node.leaf(1, 0.0)], "missing child"),
    ([Node.split(0, 0, 0.5, 1, 1), Node.leaf(1, 0.0)], "identical children"),
    ([Node.leaf(0, 1.0), Node.leaf(0, 2.0)], "duplicate"),
    ([Node.leaf(0, 1.0), Node.leaf(1, 2.0)], "unreachable"),
])
def test_structural_errors(nodes, msg):
    with pytest.raises(StructureError, match=msg):
        Tree(0, nodes)


def test_feature_index_out_of_range():
    with pytest.raises(StructureError):
        Ensemble(FeatureSpace(["a"], [(0, 1)]), [stump(3, 0.5, 0, 1)])


def test_feature_space_validation():
    with pytest.raises(ModelError):
        FeatureSpace(["a", "a"], [(0, 1), (0, 1)])
    with pytest.raises(ModelError):
        FeatureSpace(["a"], [(1, 0)])
    fs = FeatureSpace(["a", "b"], [(0, 1), (2, 3)])
    assert fs.index("b") == 1 and fs.index("0") == 0 and fs.index(1) == 1


def test_default_bounds():
    assert default_bounds([0.2, 0.7]) == (0.2 - 1, 0.7 + 1)
    assert default_bounds([0.2, 0.7], normalized=True) == (0.0, 1.0)
    assert default_bounds([]) == (0.0, 1.0)


def test_cell_index_semantics():
    assert cell_index([0.3, 0.6], 0.3) == 0
    assert cell_index([0.3, 0.6], 0.31) == 1
    assert cell_index([0.3, 0.6], 0.9) == 2


def test_round_trip(tmp_path):
    m = random_ensemble(3, 4, 3, 3)
    p = tmp_path / "m.json"
    save_ensemble(m, p)
    m2 = load_ensemble(p)
    assert ensemble_to_dict(m2) == ensemble_to_dict(m)
    first = p.read_bytes()
    save_ensemble(m2, p)
    assert p.read_bytes() == first


def test_reduction_model_saves_byte_stably(tmp_path):
    red = reduce(CnfFormula(3, [(-1, 2, -3)]))
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    save_ensemble(red.ensemble, a)
    save_ensemble(load_ensemble(a), b)
    assert a.read_bytes() == b.read_bytes()


def test_empty_ensemble_round_trip(tmp_path):
    m = Ensemble(FeatureSpace(["a"], [(0, 1)]), [])
    save_ensemble(m, tmp_path / "e.json")
    assert len(load_ensemble(tmp_path / "e.json").trees) == 0


def test_native_single_leaf(tmp_path):
    p = tmp_path / "m.json"
    p.write_text(json.dumps({"features": [{"name": "a", "lo": 0, "hi": 1}],
                             "trees": [{"root": 0, "nodes": [{"id": 0, "leaf": 0.5}]}]}))
    m = load_ensemble(p)
    assert len(m.trees) == 1 and m.max_depth == 0


def test_native_missing_child(tmp_path):
    p = tmp_path / "m.json"
    p.write_text(json.dumps({"features": ["a"], "trees": [{"root": 0, "nodes": [
        {"id": 0, "feature": "a", "threshold": 0.5, "true": 1, "false": 2},
        {"id": 1, "leaf": 1}]}]}))
    with pytest.raises(StructureError, match="missing child"):
        load_ensemble(p)


def test_native_unknown_feature(tmp_path):
    p = tmp_path / "m.json"
    p.write_text(json.dumps({"features": ["a"], "trees": [{"root": 0, "nodes": [
        {"id": 0, "feature": "zz", "threshold": 0.5, "true": 1, "false": 2},
        {"id": 1, "leaf": 1}, {"id": 2, "leaf": 0}]}]}))
    with pytest.raises(ModelError, match="unknown feature"):
        load_ensemble(p)


def test_parse_error_has_position(tmp_path):
    p = tmp_path / "m.json"
    p.write_text('{"features": [\n  "a",\n}')
    with pytest.raises(ModelError, match="line 3"):
        load_ensemble(p)


XGB = [{"nodeid": 0, "depth": 0, "split": "f1", "split_condition": 0.5, "yes": 1, "no": 2,
        "missing": 1, "children": [{"nodeid": 1, "leaf": -0.2}, {"nodeid": 2, "leaf": 0.4}]}]


def test_xgboost_dump_keeps_threshold_and_yes_as_true():
    m = ensemble_from_xgboost_dump(XGB)
    assert m.n_features == 2
    assert m([0.0, 0.4]) == -0.2 and m([0.0, 0.6]) == 0.4
    assert "split_convention" in m.metadata


def test_xgboost_dump_rejects_odd_missing_branch():
    bad = json.loads(json.dumps(XGB))
    bad[0]["missing"] = 7
    with pytest.raises(ModelError, match="missing-value"):
        ensemble_from_xgboost_dump(bad)


def test_xgboost_dump_from_file(tmp_path):
    p = tmp_path / "d.json"
    p.write_text(json.dumps([json.dumps(XGB[0])]))
    m = load_ensemble(p, format="xgboost", feature_names=["u", "f1"], normalized=True)
    assert m.feature_space.bounds == ((0.0, 1.0), (0.0, 1.0))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_batch_matches_scalar_and_sub_ensembles_add_up(seed):
    m = random_ensemble(seed, 4, 3, 3)
    X = np.random.default_rng(seed).random((20, 3))
    batch = m.evaluate_batch(X)
    a, b = m.sub_ensemble([0, 2]), m.sub_ensemble([1, 3])
    for x, v in zip(X, batch):
        assert v == pytest.approx(m(x), abs=1e-12)
        assert a(x) + b(x) == pytest.approx(v, abs=1e-12)
        # path uniqueness: one leaf per tree
        assert all(len([n for n in t.path(x) if t.node(n).is_leaf]) == 1 for t in m.trees)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_piecewise_constant_on_cells(seed):
    m = random_ensemble(seed, 3, 3, 2)
    x = np.random.default_rng(seed).random(2)
    y = []
    for j in range(2):
        bp = breakpoints_in(m.split_values(j), 0.0, 1.0)
        y.append(cell_representatives(bp, 0.0, 1.0)[cell_index(bp, x[j])])
    assert m(y) == m(list(x))
