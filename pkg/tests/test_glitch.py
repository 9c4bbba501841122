import json
import math
from pathlib import Path

import pytest
from hypothesis import assume, given, settings, strategies as st

from treeglitch.glitch import (GlitchTriple, Rejection, Shape, check_triple, classify_shape,
                               evaluate_triple, lipschitz_magnitude_bound, magnitude,
                               triple_magnitude, varying_dimension)

DATA = Path(__file__).parent / "data"


def test_breast_cancer_triple_is_a_canyon():
    doc = json.loads((DATA / "breast_cancer_triple.json").read_text())
    res = check_triple(None, *doc["points"], 1.0, outputs=doc["outputs"])
    assert isinstance(res, GlitchTriple)
    assert res.shape is Shape.CANYON
    assert res.magnitude == pytest.approx(130.25, abs=0.5)


def test_constant_function_fails_oscillation():
    res = check_triple(lambda x: 2.0, [0.0], [0.5], [1.0], 0.1)
    assert isinstance(res, Rejection) and res.reason == "monotone"
    assert not res


def test_toy_triple(toy):
    res = check_triple(toy, [0.3], [0.5], [0.7], 2.0)
    assert res.outputs == (1.0, 0.0, 1.0)
    assert res.shape is Shape.CANYON
    assert res.magnitude == pytest.approx(2.5)


def test_toy_triple_below_alpha(toy):
    res = check_triple(toy, [0.3], [0.5], [0.7], 3.0)
    assert isinstance(res, Rejection) and res.reason == "magnitude"
    assert res.magnitude == pytest.approx(2.5)


@pytest.mark.parametrize("pts", [
    ([0.0, 0.0], [0.5, 0.1], [1.0, 0.0]),
    ([0.0], [0.0], [1.0]),
    ([0.5], [0.2], [1.0]),
])
def test_ordering_rejections(pts):
    res = check_triple(lambda x: 0.0, *pts, 1.0)
    assert isinstance(res, Rejection) and res.reason == "ordering"


def test_other_coordinates_must_be_bitwise_equal():
    assert varying_dimension([0.1, 0.0], [0.1, 0.5], [0.1, 1.0]) == 1
    assert varying_dimension([0.1, 0.0], [0.1, 0.5], [math.nextafter(0.1, 1), 1.0]) is None


def test_magnitude_examples():
    assert magnitude(1, 0, 1, 0.3) == pytest.approx(10 / 3)
    assert magnitude(0, 0, 0, 1) == 0
    assert magnitude(0.7999, 0.2945, 0.7126, 0.00321) == pytest.approx(130.25, abs=0.01)
    with pytest.raises(ValueError):
        magnitude(1, 0, 1, 0.0)


def test_lipschitz_bound():
    assert lipschitz_magnitude_bound(2) == 1
    with pytest.raises(ValueError):
        lipschitz_magnitude_bound(0)


def test_alpha_must_be_positive():
    with pytest.raises(ValueError):
        check_triple(lambda x: 0.0, [0], [1], [2], 0)


def test_probability_space_keeps_shape_and_changes_magnitude(toy):
    m = check_triple(toy, [0.3], [0.5], [0.7], 0.1)
    p = check_triple(toy, [0.3], [0.5], [0.7], 0.1, output_space="probability")
    assert p.shape is m.shape and p.output_space == "probability"
    assert p.magnitude == pytest.approx((1 / (1 + math.exp(-1)) - 0.5) / 0.4)


def test_json_round_trip(toy):
    t = check_triple(toy, [0.3], [0.5], [0.7], 1.0)
    doc = t.to_json(["v1"])
    assert set(doc) >= {"dim", "points", "outputs", "magnitude", "shape", "output_space"}
    assert GlitchTriple.from_json(json.loads(json.dumps(doc))) == t


vals = st.floats(-100, 100, allow_nan=False)
gaps = st.floats(1e-3, 10)


@given(vals, vals, vals, gaps, st.floats(1e-3, 100))
def test_alpha_monotonicity(a, b, c, g, alpha):
    res = check_triple(None, [0.0], [g / 2], [g], alpha, outputs=(a, b, c))
    if isinstance(res, GlitchTriple):
        for smaller in (alpha / 2, alpha * 0.999, 1e-9):
            assert isinstance(check_triple(None, [0.0], [g / 2], [g], smaller,
                                           outputs=(a, b, c)), GlitchTriple)


@given(vals, vals, vals, gaps, st.floats(0.01, 100))
def test_scale_covariance(a, b, c, g, k):
    base = magnitude(a, b, c, g)
    assume(base > 0)
    assume(classify_shape(k * a, k * b, k * c) is not None)
    assert magnitude(k * a, k * b, k * c, g) == pytest.approx(k * base, rel=1e-9)
    assert magnitude(a, b, c, k * g) == pytest.approx(base / k, rel=1e-9)


@given(vals, vals, vals, gaps)
def test_reflection_swaps_shape(a, b, c, g):
    s = classify_shape(a, b, c)
    r = classify_shape(-a, -b, -c)
    if s is None:
        assert r is None
    else:
        assert {s, r} == {Shape.CANYON, Shape.HILL}
    assert magnitude(-a, -b, -c, g) == magnitude(a, b, c, g)


@given(st.lists(st.floats(-10, 10), min_size=3, max_size=3, unique=True),
       st.floats(-5, 5), st.floats(0.1, 3))
def test_monotone_functions_have_no_glitch(xs, shift, slope):
    xs = sorted(xs)
    f = lambda x: slope * x[0] ** 3 + shift
    assert triple_magnitude(f, [xs[0]], [xs[1]], [xs[2]]) == 0.0
    res = evaluate_triple(f, [xs[0]], [xs[1]], [xs[2]])
    assert isinstance(res, Rejection)


@settings(max_examples=200)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0.1, 5))
def test_sine_glitches_respect_half_lipschitz(u, v, w, L):
    xs = sorted((u, v, w))
    assume(xs[0] < xs[1] < xs[2])
    f = lambda x: math.sin(L * 10 * x[0]) / 10
    assert triple_magnitude(f, [xs[0]], [xs[1]], [xs[2]]) <= L / 2 + 1e-9
