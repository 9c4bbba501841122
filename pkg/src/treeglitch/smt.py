"""SMT-LIB2 (QF_LRA) encodings of the glitch decision problems.

Each tree becomes a nested ``ite`` term per input copy, so the solver's
theory handles path consistency and strict inequalities stay strict.
"""
from __future__ import annotations

import math
import os
import shlex
import shutil
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from pathlib import Path

from .ensemble import Ensemble, Tree
from .glitch import GlitchTriple, Rejection, evaluate_triple
from .milp.encode import COPIES, EncodingParams


class SmtError(RuntimeError):
    pass


class SmtSoundnessError(SmtError):
    pass


def smt_number(v: float | Fraction) -> str:
    """Exact SMT-LIB literal for a float (its full binary expansion) or fraction."""
    if isinstance(v, Fraction):
        if v.denominator == 1:
            body = f"{abs(v.numerator)}.0"
        else:
            body = f"(/ {abs(v.numerator)}.0 {v.denominator}.0)"
        return f"(- {body})" if v < 0 else body
    if not math.isfinite(v):
        raise ValueError(f"cannot encode {v}")
    d = Decimal(float(v))
    body = format(d.copy_abs(), "f")
    if "." not in body:
        body += ".0"
    return f"(- {body})" if d < 0 else body


@dataclass
class SmtQuery:
    declarations: list[str] = field(default_factory=list)
    definitions: list[str] = field(default_factory=list)
    assertions: list[str] = field(default_factory=list)
    get_values: list[str] = field(default_factory=list)
    logic: str = "QF_LRA"
    dim: int | None = None
    n_features: int = 0

    def text(self) -> str:
        lines = [f"(set-logic {self.logic})"]
        lines += self.declarations + self.definitions
        lines += [f"(assert {a})" for a in self.assertions]
        lines.append("(check-sat)")
        lines.append(f"(get-value ({' '.join(self.get_values)}))")
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.text())


def _xname(tag: str, j: int) -> str:
    return f"x{tag}_{j}"


def _tree_term(tree: Tree, tag: str) -> str:
    def term(nid):
        n = tree.node(nid)
        if n.is_leaf:
            return smt_number(n.value)
        return (f"(ite (<= {_xname(tag, n.feature)} {smt_number(n.threshold)}) "
                f"{term(n.true_child)} {term(n.false_child)})")
    return term(tree.root)


def _same_except(n: int, i: int) -> str:
    parts = []
    for j in range(n):
        xm, xc, xp = (_xname(t, j) for t in COPIES)
        if j == i:
            parts += [f"(< {xm} {xc})", f"(< {xc} {xp})"]
        else:
            parts += [f"(= {xm} {xc})", f"(= {xc} {xp})"]
    return f"(and {' '.join(parts)})"


def emit_smt(m: Ensemble, params: EncodingParams, dim: int | None = None,
             path=None) -> SmtQuery:
    """Decision query: a glitch of magnitude at least ``params.alpha`` along
    ``dim`` (any dimension when None).  Written to ``path`` when given."""
    if params.alpha is None or not params.alpha > 0:
        raise ValueError("the SMT query needs alpha > 0")
    n = m.n_features
    if dim is not None and not 0 <= dim < n:
        raise ValueError(f"dimension {dim} out of range")
    q = SmtQuery(dim=dim, n_features=n)
    bounds = params.bounds(m)
    for tag in COPIES:
        for j in range(n):
            x = _xname(tag, j)
            q.declarations.append(f"(declare-const {x} Real)")
            lo, hi = bounds[j]
            q.assertions.append(f"(<= {smt_number(lo)} {x} {smt_number(hi)})")
            q.get_values.append(x)
    for tag in COPIES:
        terms = []
        for k, tree in enumerate(m.trees):
            name = f"t{tag}_{k}"
            q.definitions.append(f"(define-fun {name} () Real {_tree_term(tree, tag)})")
            terms.append(name)
        body = "0.0" if not terms else terms[0] if len(terms) == 1 else f"(+ {' '.join(terms)})"
        q.definitions.append(f"(define-fun y{tag} () Real {body})")
        q.get_values.append(f"y{tag}")
    if dim is not None:
        q.assertions.append(_same_except(n, dim))
        gap = f"(- {_xname('p', dim)} {_xname('m', dim)})"
    else:
        q.assertions.append(f"(or {' '.join(_same_except(n, i) for i in range(n))})")
        diffs = [f"(- {_xname('p', j)} {_xname('m', j)})" for j in range(n)]
        gap = diffs[0] if n == 1 else f"(+ {' '.join(diffs)})"
    q.definitions.append(f"(define-fun g () Real {gap})")
    a = smt_number(params.alpha)
    need = f"(* {a} g)"
    canyon = [f"(>= (- ym yc) {need})", f"(>= (- yp yc) {need})"]
    hill = [f"(>= (- yc ym) {need})", f"(>= (- yc yp) {need})"]
    if params.mode == "delta":
        canyon += ["(>= ym 0.0)", "(>= yp 0.0)", "(< yc 0.0)"]
        hill += ["(< ym 0.0)", "(< yp 0.0)", "(>= yc 0.0)"]
    q.assertions.append(f"(or (and {' '.join(canyon)}) (and {' '.join(hill)}))")
    if path is not None:
        q.write(path)
    return q


@dataclass
class SmtOutcome:
    status: str  # sat | unsat | unknown | timeout | error
    model_text: str = ""
    wall_time: float = 0.0
    diagnostics: str = ""


def smt_solver_command() -> list[str]:
    """Solver command from GLITCH_SMT_SOLVER, falling back to z3 on PATH."""
    env = os.environ.get("GLITCH_SMT_SOLVER")
    if env:
        return shlex.split(env)
    exe = shutil.which("z3")
    if exe is None:
        raise SmtError("no SMT solver found; install z3 or set GLITCH_SMT_SOLVER")
    return [exe, "-smt2"]


def run_smt(query: SmtQuery | str | Path, command: list[str] | None = None,
            time_limit: float | None = None) -> SmtOutcome:
    """Run an SMT-LIB2 script (a query or a file path) and capture the answer."""
    command = command or smt_solver_command()
    with tempfile.TemporaryDirectory(prefix="glitch-smt-") as tmp:
        if isinstance(query, SmtQuery):
            path = Path(tmp) / "query.smt2"
            query.write(path)
        else:
            path = Path(query)
        start = time.monotonic()
        try:
            proc = subprocess.run(command + [str(path)], capture_output=True, text=True,
                                  timeout=None if time_limit is None else time_limit)
        except subprocess.TimeoutExpired:
            return SmtOutcome("timeout", wall_time=time.monotonic() - start)
        except OSError as err:
            return SmtOutcome("error", diagnostics=f"cannot start {command[0]}: {err}")
        wall = time.monotonic() - start
    out = proc.stdout.strip()
    first, _, rest = out.partition("\n")
    first = first.strip()
    if first in ("sat", "unsat", "unknown"):
        return SmtOutcome(first, rest if first == "sat" else "", wall, proc.stderr[-2000:])
    if "timeout" in first:
        return SmtOutcome("timeout", wall_time=wall)
    return SmtOutcome("error", wall_time=wall, diagnostics=(out + proc.stderr)[-2000:])


def _tokens(text: str):
    return text.replace("(", " ( ").replace(")", " ) ").split()


def _parse_sexpr(tokens, k=0):
    if tokens[k] == "(":
        items, k = [], k + 1
        while tokens[k] != ")":
            item, k = _parse_sexpr(tokens, k)
            items.append(item)
        return items, k + 1
    return tokens[k], k + 1


def parse_value(expr) -> Fraction:
    """Rational value of a model term: decimals, ``(- v)`` and ``(/ a b)``."""
    if isinstance(expr, str):
        return Fraction(expr)
    if len(expr) == 2 and expr[0] == "-":
        return -parse_value(expr[1])
    if len(expr) == 3 and expr[0] == "/":
        return parse_value(expr[1]) / parse_value(expr[2])
    raise SmtError(f"unsupported value term {expr!r}")


def parse_model(model_text: str) -> dict[str, Fraction]:
    toks = _tokens(model_text)
    if not toks:
        raise SmtError("empty model")
    try:
        tree, _ = _parse_sexpr(toks)
        return {str(name): parse_value(val) for name, val in tree}
    except (IndexError, ValueError, ZeroDivisionError) as err:
        raise SmtError(f"cannot parse model: {err}") from None


def _to_float(v: Fraction, splits) -> float:
    """Nearest float to ``v`` that stays on the same side of every split."""
    f = float(v)
    for t in splits:
        if v > Fraction(t) and not f > t:
            f = math.nextafter(t, math.inf)
    return f


def decode_smt_model(m: Ensemble, model_text: str, dim: int | None = None,
                     tol: float = 1e-6) -> GlitchTriple:
    """Verified triple from a ``get-value`` answer.

    The model's output values must match re-evaluation within ``tol``.
    """
    vals = parse_model(model_text)
    n = m.n_features
    try:
        exact = {t: [vals[_xname(t, j)] for j in range(n)] for t in COPIES}
    except KeyError as err:
        raise SmtError(f"model lacks {err.args[0]}") from None
    if dim is None:
        moving = [j for j in range(n) if exact["m"][j] != exact["p"][j]]
        if len(moving) != 1:
            raise SmtSoundnessError(f"{len(moving)} coordinates vary in the model")
        dim = moving[0]
    pts = {}
    for t in COPIES:
        pts[t] = [_to_float(exact[t if j == dim else "c"][j], m.split_values(j))
                  for j in range(n)]
    for t in COPIES:
        got = m.evaluate(pts[t])
        want = vals.get(f"y{t}")
        if want is not None and abs(float(want) - got) > tol * max(1.0, abs(got)):
            raise SmtSoundnessError(f"copy {t}: model output {float(want)} but the "
                                    f"ensemble evaluates to {got}")
    res = evaluate_triple(m, pts["m"], pts["c"], pts["p"])
    if isinstance(res, Rejection):
        raise SmtSoundnessError(f"decoded points are not a glitch: {res.detail}")
    return res


def smt_decide(m: Ensemble, params: EncodingParams, dim: int | None = None,
               command: list[str] | None = None, time_limit: float | None = None):
    """Returns (status, triple or None, outcome); ``status`` is found / none /
    timeout / unknown / error."""
    q = emit_smt(m, params, dim)
    out = run_smt(q, command, time_limit)
    if out.status == "sat":
        return "found", decode_smt_model(m, out.model_text, dim), out
    if out.status == "unsat":
        return "none", None, out
    return out.status, None, out
