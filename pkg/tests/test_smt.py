from fractions import Fraction

import pytest

from treeglitch.ensemble import Ensemble, FeatureSpace
from treeglitch.generate import constant_tree, random_ensemble, toy_canyon
from treeglitch.glitch import GlitchTriple, check_triple
from treeglitch.milp.encode import EncodingParams
from treeglitch.oracle import exhaustive_search
from treeglitch.problem import SearchProblem
from treeglitch.smt import (SmtError, SmtSoundnessError, decode_smt_model, emit_smt,
                            parse_model, parse_value, run_smt, smt_decide, smt_number)

from conftest import needs_z3


def test_number_literals_are_exact():
    assert smt_number(0.5) == "0.5"
    assert smt_number(-2.0) == "(- 2.0)"
    assert smt_number(0.1).startswith("0.1000000000000000055511151231257827")
    assert Fraction(smt_number(0.1)) == Fraction(0.1)
    assert smt_number(Fraction(-1, 3)) == "(- (/ 1.0 3.0))"


def test_fraction_values_parse_exactly():
    assert parse_value(["/", "1", "3"]) == Fraction(1, 3)
    assert parse_value(["-", ["/", "1.0", "4.0"]]) == Fraction(-1, 4)
    assert parse_model("((x (/ 1 3)) (y (- 2.5)))") == {"x": Fraction(1, 3), "y": Fraction(-5, 2)}
    with pytest.raises(SmtError):
        parse_model("")


def test_query_declares_everything_it_uses():
    q = emit_smt(toy_canyon(), EncodingParams(3.0), 0)
    text = q.text()
    assert text.startswith("(set-logic QF_LRA)")
    for name in ("xm_0", "xc_0", "xp_0"):
        assert f"(declare-const {name} Real)" in text
    assert "(< xm_0 xc_0)" in text and "(< xc_0 xp_0)" in text
    assert "(check-sat)" in text
    with pytest.raises(ValueError):
        emit_smt(toy_canyon(), EncodingParams(None), 0)


@needs_z3
def test_toy_sat_and_unsat():
    m = toy_canyon()
    status, triple, _ = smt_decide(m, EncodingParams(3.0), 0)
    assert status == "found"
    assert isinstance(check_triple(m, *triple.points, 3.0), GlitchTriple)
    assert smt_decide(m, EncodingParams(4.0), 0)[0] == "none"


@needs_z3
def test_constant_model_unsat():
    m = Ensemble(FeatureSpace(["a"], [(0, 1)]), [constant_tree(1.0)])
    assert smt_decide(m, EncodingParams(0.01))[0] == "none"


@needs_z3
def test_any_dim_query():
    m = random_ensemble(4, 3, 2, 3)
    sup = exhaustive_search(m, SearchProblem()).sup_magnitude
    status, triple, _ = smt_decide(m, EncodingParams(0.9 * sup))
    assert status == "found" and triple.magnitude >= 0.9 * sup * (1 - 1e-12)
    assert smt_decide(m, EncodingParams(1.1 * sup))[0] == "none"


@needs_z3
def test_delta_mode_query():
    toy = toy_canyon()
    above = Ensemble(toy.feature_space, list(toy.trees) + [constant_tree(0.5)])
    assert smt_decide(above, EncodingParams(1.0), 0)[0] == "found"
    assert smt_decide(above, EncodingParams(1.0, mode="delta"), 0)[0] == "none"


@needs_z3
def test_tampered_model_is_rejected():
    m = toy_canyon()
    out = run_smt(emit_smt(m, EncodingParams(3.0), 0))
    assert out.status == "sat"
    assert decode_smt_model(m, out.model_text, 0).magnitude >= 3.0
    vals = parse_model(out.model_text)
    bad = vals.copy()
    bad["xp_0"] = Fraction(1, 10)
    text = "(" + " ".join(f"({k} {float(v)!r})" for k, v in bad.items()) + ")"
    with pytest.raises(SmtSoundnessError):
        decode_smt_model(m, text, 0)


def test_solver_command_from_environment(monkeypatch, tmp_path):
    script = tmp_path / "fake.sh"
    script.write_text("#!/bin/sh\necho unsat\n")
    script.chmod(0o755)
    monkeypatch.setenv("GLITCH_SMT_SOLVER", str(script))
    assert smt_decide(toy_canyon(), EncodingParams(1.0), 0)[0] == "none"
    monkeypatch.setenv("GLITCH_SMT_SOLVER", "/nonexistent/solver")
    assert run_smt(emit_smt(toy_canyon(), EncodingParams(1.0), 0)).status == "error"
