import numpy as np
import pytest

from treeglitch.glitch import GlitchTriple, check_triple
from treeglitch.oracle import exhaustive_search
from treeglitch.problem import SearchProblem
from treeglitch.satgen import (CnfError, CnfFormula, brute_force_sat, parse_dimacs,
                               random_3cnf, reduce, write_dimacs)

TOY = CnfFormula(3, [(-1, 2, -3)])


def test_toy_clause_trees_structure():
    red = reduce(TOY)
    left, right = red.ensemble.trees
    assert len(red.ensemble.trees) == 2 and red.alpha == 1.0 and red.dim == 3
    # left tree: r <= 0.5 - eps, true side is the zero leaf
    root = left.node(left.root)
    assert root.feature == 3 and root.threshold == 0.5 - red.epsilon
    assert left.node(root.true_child).value == 0.0
    # right tree: r <= -0.5, false side is the zero leaf
    root = right.node(right.root)
    assert root.threshold == -0.5 and right.node(root.false_child).value == 0.0
    # the two clause subtrees are identical up to node ids
    assert left.depth == right.depth == 4
    assert sorted(n.value for n in left.leaves) == sorted(n.value for n in right.leaves)


def test_two_clause_formula_shape():
    red = reduce(CnfFormula(4, [(1, -2, 3), (-1, 2, 4)]))
    assert len(red.ensemble.trees) == 4 and red.ensemble.max_depth == 4


def test_evaluation_points_for_satisfying_assignment():
    red = reduce(TOY)
    a = (False, False, False)
    m, eps = red.ensemble, red.epsilon
    assert m(red.point(a, -0.5)) == 1.0
    assert m(red.point(a, 0.0)) == 0.0
    assert m(red.point(a, 0.5 - eps / 2)) == 1.0


def test_explicit_witness_magnitude():
    phi = CnfFormula(4, [(1, -2, 3), (-1, 2, 4), (2, 3, -4)])
    ok, a = brute_force_sat(phi)
    red = reduce(phi)
    eps, mm = red.epsilon, red.alpha
    res = check_triple(red.ensemble, red.point(a, -0.5), red.point(a, 0.0),
                       red.point(a, 0.5 - eps / 2), mm)
    assert isinstance(res, GlitchTriple)
    assert res.magnitude == pytest.approx(mm / (1 - eps / 2), rel=1e-12)


def test_duplicate_variables_collapse_levels():
    red = reduce(CnfFormula(1, [(1, 1, 1)]))
    assert red.ensemble.max_depth == 2
    red = reduce(CnfFormula(1, [(1, -1, 1)]))
    assert red.ensemble([0.5, 0.9]) == 1.0 and red.ensemble([1.0, 0.9]) == 1.0


def test_epsilon_must_be_inside_interval():
    with pytest.raises(CnfError):
        reduce(TOY, epsilon=1.0)
    with pytest.raises(CnfError):
        reduce(TOY, epsilon=0.0)
    assert reduce(CnfFormula(3, [(1, 2, 3)] * 4)).epsilon == 1 / 8


def test_clause_width_checked():
    with pytest.raises(CnfError):
        CnfFormula(3, [(1, 2)])
    with pytest.raises(CnfError):
        CnfFormula(2, [(1, 2, 3)])


def test_brute_force_examples():
    assert brute_force_sat(CnfFormula(1, [(1, 1, 1), (-1, -1, -1)])) == (False, None)
    ok, w = brute_force_sat(TOY)
    assert ok and w[0] is False


def test_brute_force_matches_enumeration():
    for seed in range(20):
        phi = random_3cnf(seed, 5, 12)
        ok, w = brute_force_sat(phi)
        sats = [a for a in np.ndindex(*(2,) * 5) if phi.evaluate(a)]
        assert ok == bool(sats)
        if ok:
            assert phi.evaluate(w)


def test_unsat_reduction_has_smaller_supremum():
    phi = CnfFormula(3, [(1, 2, 3), (1, 2, -3), (1, -2, 3), (1, -2, -3),
                         (-1, 2, 3), (-1, 2, -3), (-1, -2, 3), (-1, -2, -3)])
    assert not brute_force_sat(phi)[0]
    red = reduce(phi)
    res = exhaustive_search(red.ensemble, SearchProblem(dim=red.dim))
    assert res.sup_magnitude < red.alpha


def test_no_glitch_off_the_control_dimension():
    red = reduce(random_3cnf(3, 4, 3))
    for j in range(red.dim):
        assert exhaustive_search(red.ensemble, SearchProblem(dim=j)).best is None


def test_dimacs_toy(tmp_path):
    p = tmp_path / "f.cnf"
    p.write_text("c toy\np cnf 3 1\n-1 2 -3 0\n")
    assert parse_dimacs(p) == TOY


def test_dimacs_short_clause(tmp_path):
    p = tmp_path / "f.cnf"
    p.write_text("p cnf 2 1\n1 -2 0\n")
    with pytest.raises(CnfError, match="pad"):
        parse_dimacs(p)
    phi = parse_dimacs(p, pad=True)
    assert phi.clauses == ((1, -2, -2),)


def test_padding_preserves_satisfiability(tmp_path):
    rng = np.random.default_rng(0)
    for k in range(20):
        n = 4
        lines = [f"p cnf {n} 6"]
        for _ in range(6):
            width = int(rng.integers(1, 4))
            lits = [int(v) * int(rng.choice([-1, 1])) for v in rng.integers(1, n + 1, width)]
            lines.append(" ".join(map(str, lits)) + " 0")
        p = tmp_path / f"f{k}.cnf"
        p.write_text("\n".join(lines) + "\n")
        padded = parse_dimacs(p, pad=True)
        raw = [[int(t) for t in l.split()[:-1]] for l in lines[1:]]
        direct = any(all(any((l > 0) == bool(a[abs(l) - 1]) for l in c) for c in raw)
                     for a in np.ndindex(*(2,) * n))
        assert brute_force_sat(padded)[0] == direct


def test_dimacs_round_trip(tmp_path):
    phi = random_3cnf(7, 6, 5)
    write_dimacs(phi, tmp_path / "x.cnf")
    assert parse_dimacs(tmp_path / "x.cnf") == phi
