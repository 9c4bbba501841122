"""3-CNF-SAT to fixed-dimension glitch search, plus a brute-force SAT oracle.

For every clause ``C_k`` two trees are built around a shared clause subtree
that outputs 1 exactly on assignments satisfying ``C_k``:

* ``T_k``:  ``r <= 0.5 - eps`` ? 0 : clause subtree
* ``T'_k``: ``r <= -0.5`` ? clause subtree : 0

A variable ``z`` reads as true when ``v_z <= 0.5``.  The formula is
satisfiable iff the ensemble has a glitch along ``r`` of magnitude above
``m`` (the number of clauses).
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ensemble import Ensemble, FeatureSpace, Node, Tree

MAX_BRUTE_FORCE_VARS = 24


class CnfError(ValueError):
    pass


@dataclass(frozen=True)
class CnfFormula:
    num_vars: int
    clauses: tuple[tuple[int, int, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "clauses", tuple(tuple(int(l) for l in c) for c in self.clauses))
        if self.num_vars < 1:
            raise CnfError("a formula needs at least one variable")
        for k, c in enumerate(self.clauses):
            if len(c) != 3:
                raise CnfError(f"clause {k + 1} has {len(c)} literals, expected 3")
            for lit in c:
                if lit == 0 or abs(lit) > self.num_vars:
                    raise CnfError(f"clause {k + 1}: literal {lit} outside 1..{self.num_vars}")

    @property
    def num_clauses(self) -> int:
        return len(self.clauses)

    def evaluate(self, assignment) -> bool:
        """``assignment[v - 1]`` is the truth value of variable ``v``."""
        return all(any((lit > 0) == bool(assignment[abs(lit) - 1]) for lit in c)
                   for c in self.clauses)


@dataclass(frozen=True)
class ReductionOutput:
    ensemble: Ensemble
    alpha: float
    dim: int
    epsilon: float

    def point(self, assignment, r: float) -> tuple[float, ...]:
        """Input encoding ``assignment`` with control feature ``r``.

        True maps to 0.5 and false to 1.0, on either side of the ``v <= 0.5``
        predicates.
        """
        x = [0.5 if bool(a) else 1.0 for a in assignment]
        x.append(float(r))
        return tuple(x)


def _clause_tree(b: list[Node], clause, var_feature) -> int:
    """Append the clause subtree to ``b``; returns its root id.

    One level per distinct variable in literal order; a branch that
    satisfies a literal ends in leaf 1, running out of levels ends in leaf 0.
    """
    order = []
    for lit in clause:
        if abs(lit) not in order:
            order.append(abs(lit))

    def build(level):
        nid = len(b)
        if level == len(order):
            b.append(Node.leaf(nid, 0.0))
            return nid
        v = order[level]
        b.append(None)
        children = []
        for value in (True, False):
            if any(abs(lit) == v and (lit > 0) == value for lit in clause):
                cid = len(b)
                b.append(Node.leaf(cid, 1.0))
            else:
                cid = build(level + 1)
            children.append(cid)
        b[nid] = Node.split(nid, var_feature(v), 0.5, children[0], children[1])
        return nid

    return build(0)


def reduce(phi: CnfFormula, epsilon: float | None = None) -> ReductionOutput:
    """Build the ``2m``-tree ensemble, ``alpha = m`` and the control dimension."""
    if not isinstance(phi, CnfFormula):
        raise TypeError("expected a CnfFormula")
    m = phi.num_clauses
    if m == 0:
        raise CnfError("formula has no clauses")
    if epsilon is None:
        epsilon = 1.0 / (2 * m)
    if not 0 < epsilon < 1.0 / m:
        raise CnfError(f"epsilon must lie in (0, 1/m) = (0, {1.0 / m})")
    n = phi.num_vars
    r = n
    trees = []
    for clause in phi.clauses:
        # T_k: true -> 0, false -> clause subtree
        b: list[Node] = [None, Node.leaf(1, 0.0)]
        sub = _clause_tree(b, clause, lambda v: v - 1)
        b[0] = Node.split(0, r, 0.5 - epsilon, 1, sub)
        trees.append(Tree(0, b))
        # T'_k: true -> clause subtree, false -> 0
        b = [None]
        sub = _clause_tree(b, clause, lambda v: v - 1)
        zero = len(b)
        b.append(Node.leaf(zero, 0.0))
        b[0] = Node.split(0, r, -0.5, sub, zero)
        trees.append(Tree(0, b))
    names = [f"v{k}" for k in range(1, n + 1)] + ["r"]
    bounds = [(0.0, 1.0)] * n + [(-1.0, 1.0)]
    meta = {"reduction": "3cnf", "alpha": float(m), "dim": "r", "epsilon": epsilon}
    return ReductionOutput(Ensemble(FeatureSpace(names, bounds), trees, meta),
                           float(m), r, float(epsilon))


def brute_force_sat(phi: CnfFormula) -> tuple[bool, tuple[bool, ...] | None]:
    """Exhaustive satisfiability check; the witness is the first satisfying
    assignment in binary counting order (bit ``v-1`` holds variable ``v``)."""
    n = phi.num_vars
    if n > MAX_BRUTE_FORCE_VARS:
        raise CnfError(f"{n} variables exceed the brute-force limit of {MAX_BRUTE_FORCE_VARS}")
    lits = np.asarray(phi.clauses, dtype=np.int64).reshape(-1, 3)
    var = np.abs(lits) - 1
    pos = lits > 0
    chunk = 1 << 16
    for start in range(0, 1 << n, chunk):
        k = np.arange(start, min(start + chunk, 1 << n), dtype=np.int64)
        ok = np.ones(k.shape, dtype=bool)
        for c in range(len(lits)):
            sat = np.zeros(k.shape, dtype=bool)
            for j in range(3):
                bit = ((k >> var[c, j]) & 1).astype(bool)
                sat |= bit == pos[c, j]
            ok &= sat
        hit = np.flatnonzero(ok)
        if hit.size:
            w = int(k[hit[0]])
            return True, tuple(bool((w >> v) & 1) for v in range(n))
    return False, None


def random_3cnf(seed, num_vars: int, num_clauses: int) -> CnfFormula:
    """Random formula whose clauses each use three distinct variables."""
    if num_vars < 3:
        raise CnfError("need at least three variables for distinct-variable clauses")
    rng = np.random.default_rng(seed)
    clauses = []
    for _ in range(num_clauses):
        vs = rng.choice(np.arange(1, num_vars + 1), size=3, replace=False)
        signs = rng.choice([-1, 1], size=3)
        clauses.append(tuple(int(v * s) for v, s in zip(vs, signs)))
    return CnfFormula(num_vars, clauses)


def parse_dimacs(path, pad: bool = False) -> CnfFormula:
    """Read a DIMACS CNF file.

    Clauses with fewer than three literals are an error unless ``pad`` is set,
    in which case the last literal is repeated (which preserves the clause).
    """
    num_vars = num_clauses = None
    clauses: list[list[int]] = []
    current: list[int] = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("c") or line.startswith("%"):
            continue
        if line.startswith("p"):
            parts = line.split()
            if len(parts) != 4 or parts[1] != "cnf":
                raise CnfError(f"line {lineno}: malformed problem line {line!r}")
            try:
                num_vars, num_clauses = int(parts[2]), int(parts[3])
            except ValueError:
                raise CnfError(f"line {lineno}: malformed problem line {line!r}") from None
            continue
        if num_vars is None:
            raise CnfError(f"line {lineno}: clause before the 'p cnf' header")
        for tok in line.split():
            try:
                lit = int(tok)
            except ValueError:
                raise CnfError(f"line {lineno}: bad literal {tok!r}") from None
            if lit == 0:
                clauses.append(current)
                current = []
            else:
                current.append(lit)
    if num_vars is None:
        raise CnfError("missing 'p cnf' header")
    if current:
        clauses.append(current)
    if num_clauses is not None and len(clauses) != num_clauses:
        raise CnfError(f"header declares {num_clauses} clauses, found {len(clauses)}")
    fixed = []
    for k, c in enumerate(clauses, 1):
        if not c:
            raise CnfError(f"clause {k} is empty")
        if len(c) > 3:
            raise CnfError(f"clause {k} has {len(c)} literals; only 3-CNF is supported")
        if len(c) < 3:
            if not pad:
                raise CnfError(f"clause {k} has {len(c)} literals; use pad=True to repeat literals")
            c = c + [c[-1]] * (3 - len(c))
        fixed.append(tuple(c))
    return CnfFormula(num_vars, fixed)


def write_dimacs(phi: CnfFormula, path) -> None:
    lines = [f"p cnf {phi.num_vars} {phi.num_clauses}"]
    lines += [" ".join(str(l) for l in c) + " 0" for c in phi.clauses]
    Path(path).write_text("\n".join(lines) + "\n")
