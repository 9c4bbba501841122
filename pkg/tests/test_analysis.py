import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from treeglitch.analysis import (ANTICIPATED, INCONCLUSIVE, UNANTICIPATED, LabeledDataset,
                                 classify_violation, export_slice_csv, monotonicity_sample,
                                 probe_point, slice_csv_text)
from treeglitch.ensemble import Ensemble, FeatureSpace
from treeglitch.generate import constant_tree, monotone_ensemble, random_ensemble


def test_monotone_ensemble_has_no_local_oscillation():
    rep = monotonicity_sample(monotone_ensemble(0, 5, 3, 3), 500, seed=1, step=0.05)
    assert rep.non_monotonic == 0 and rep.percent == 0.0


def test_toy_probe_flags_canyon(toy):
    assert probe_point(toy, [0.45], 0.2) == [0]
    assert probe_point(toy, [0.45], 0.1) == []


def test_sampling_is_reproducible():
    m = random_ensemble(3, 5, 3, 3)
    a = monotonicity_sample(m, 300, seed=9, step=0.1)
    b = monotonicity_sample(m, 300, seed=9, step=0.1)
    assert a == b
    # each sample has its own stream, so a prefix run agrees on the prefix
    c = monotonicity_sample(m, 300, seed=10, step=0.1)
    assert a.to_json()["seed"] == 9 and c.seed == 10


def test_sampling_argument_errors(toy):
    with pytest.raises(ValueError):
        monotonicity_sample(toy, 10, 0, step=2.0)
    with pytest.raises(ValueError):
        monotonicity_sample(toy, 0, 0, step=0.1)


def _ds(points, labels):
    return LabeledDataset(np.asarray(points, dtype=float), labels)


def test_classification_verdicts():
    ds = _ds([[0.0], [0.1], [0.2], [5.0]], [0, 1, 1, 0])
    assert classify_violation(ds, [0.05], 0.1).verdict == ANTICIPATED
    assert classify_violation(ds, [0.15], 0.06).verdict == UNANTICIPATED
    one = classify_violation(ds, [5.0], 0.5)
    assert one.verdict == INCONCLUSIVE and "one training point" in one.note
    assert classify_violation(ds, [9.0], 0.5).verdict == INCONCLUSIVE
    assert classify_violation(_ds(np.zeros((0, 1)), []), [0.0], 1.0).verdict == INCONCLUSIVE


def test_classification_evidence_matches_verdict():
    ds = _ds([[0.0, 0.0], [0.3, 0.3], [0.1, 0.0]], [1, 0, 1])
    res = classify_violation(ds, [0.0, 0.0], 0.35)
    assert res.verdict == ANTICIPATED
    i, j = res.differing_pair
    assert ds.labels[i] != ds.labels[j]
    assert res.label_counts == (1, 2)
    assert classify_violation(ds, [0.0, 0.0], 0.35, norm="l2").verdict == UNANTICIPATED


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.01, 0.5), st.floats(1.0, 3.0))
def test_anticipated_is_monotone_in_epsilon(seed, eps, grow):
    rng = np.random.default_rng(seed)
    ds = _ds(rng.random((30, 2)), rng.integers(0, 2, 30))
    x = rng.random(2)
    if classify_violation(ds, x, eps).verdict == ANTICIPATED:
        assert classify_violation(ds, x, eps * grow).verdict == ANTICIPATED


def test_dataset_validation(tmp_path):
    with pytest.raises(ValueError):
        _ds([[0.0]], [2])
    with pytest.raises(ValueError):
        _ds([[0.0], [1.0]], [1])
    with pytest.raises(ValueError):
        _ds([[2.0]], [1]).check_bounds([(0, 1)])
    p = tmp_path / "d.csv"
    p.write_text("a,b,label\n0.1,0.2,1\n0.3,0.4,0\n")
    ds = LabeledDataset.from_csv(p)
    assert ds.feature_names == ("a", "b") and list(ds.labels) == [1, 0]
    assert LabeledDataset.from_csv(p, feature_names=["b"]).points.tolist() == [[0.2], [0.4]]
    with pytest.raises(ValueError):
        LabeledDataset.from_csv(p, label_column="y")


def test_toy_slice_rows(toy, tmp_path):
    rows = export_slice_csv(toy, [0.0], 0, resolution=2, path=tmp_path / "s.csv")
    assert len(rows) >= 6
    assert [v for _, v in rows] == sorted([v for _, v in rows], key=lambda _: 0)
    levels = []
    for _, v in rows:
        if not levels or levels[-1] != v:
            levels.append(v)
    assert levels == [1.0, 0.0, 1.0]
    text = (tmp_path / "s.csv").read_text()
    assert text.splitlines()[0] == "x,output"
    assert text == slice_csv_text(rows)


def test_constant_slice_and_probability_space():
    m = Ensemble(FeatureSpace(["a"], [(0, 1)]), [constant_tree(2.0)])
    rows = export_slice_csv(m, [0.0], 0, resolution=5)
    assert {v for _, v in rows} == {2.0}
    prob = export_slice_csv(m, [0.0], 0, resolution=5, output_space="probability")
    assert prob[0][1] == pytest.approx(1 / (1 + np.exp(-2.0)))
    with pytest.raises(ValueError):
        export_slice_csv(m, [0.0], 0, resolution=1)
