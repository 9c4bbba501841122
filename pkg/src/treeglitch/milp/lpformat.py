"""CPLEX LP file writer."""
from __future__ import annotations

import math
from pathlib import Path

from .instance import BINARY, MilpInstance

_LINE = 200


def _num(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def _expr(terms) -> list[str]:
    out = []
    for k, (coef, var) in enumerate(terms):
        sign = "-" if coef < 0 else "+"
        mag = abs(coef)
        body = var if mag == 1 else f"{_num(mag)} {var}"
        if k == 0:
            out.append(body if sign == "+" else f"- {body}")
        else:
            out.append(f"{sign} {body}")
    return out


def _wrap(head: str, tokens: list[str]) -> list[str]:
    lines, cur = [], head
    for tok in tokens:
        if len(cur) + len(tok) + 1 > _LINE and cur.strip():
            lines.append(cur)
            cur = "   "
        cur += " " + tok
    lines.append(cur)
    return lines


def lp_text(inst: MilpInstance) -> str:
    lines = ["\\ glitch search model", "Maximize" if inst.sense == "max" else "Minimize"]
    obj = [(c, v) for v, c in inst.objective.items() if c != 0.0]
    if not obj:
        # LP readers need at least one term; a zero coefficient keeps it a feasibility model
        obj_tokens = [f"0 {next(iter(inst.variables))}"] if inst.variables else []
    else:
        obj_tokens = _expr(obj)
    lines += _wrap(" obj:", obj_tokens)
    lines.append("Subject To")
    for c in inst.constraints:
        terms = c.terms
        if not terms:
            # keep the row visible so infeasible empty rows are not silently dropped
            terms = ((0.0, next(iter(inst.variables))),)
            tokens = [f"0 {terms[0][1]}"]
        else:
            tokens = _expr(terms)
        tokens += [c.sense, _num(c.rhs)]
        lines += _wrap(f" {c.name}:", tokens)
    lines.append("Bounds")
    for v in inst.variables.values():
        if v.kind == BINARY and v.lower == 0 and v.upper == 1:
            continue
        lo = "-inf" if v.lower == -math.inf else _num(v.lower)
        hi = "+inf" if v.upper == math.inf else _num(v.upper)
        if v.lower == v.upper:
            lines.append(f" {v.name} = {lo}")
        elif v.lower == -math.inf and v.upper == math.inf:
            lines.append(f" {v.name} free")
        else:
            lines.append(f" {lo} <= {v.name} <= {hi}")
    bins = inst.binaries
    if bins:
        lines.append("Binary")
        lines += _wrap("", bins)
    lines.append("End")
    return "\n".join(lines) + "\n"


def emit_lp(inst: MilpInstance, path) -> None:
    Path(path).write_text(lp_text(inst))
