"""Glitch search through the MILP encodings and an external solver."""
from __future__ import annotations

import math
import tempfile
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

from ..ensemble import Ensemble
from ..glitch import GlitchTriple, Rejection, check_triple, evaluate_triple
from ..oracle import OracleResult
from .backends import (FEASIBLE, INFEASIBLE, SOLVER_ERROR, TIMEOUT, SolveOutcome,
                       SolverBackendConfig, SolverError, default_backend, run_backend)
from .encode import (COPIES, Encoding, EncodingMap, EncodingParams, encode_decision,
                     encode_max_step)
from .lpformat import emit_lp

LEAF_TOL = 1e-6
MAX_ITERATIONS = 50


class EncodingSoundnessError(RuntimeError):
    """The solver's leaf pattern disagrees with evaluating the ensemble."""


@dataclass
class DecisionResult:
    status: str  # found | none | timeout | error
    triple: GlitchTriple | None = None
    wall_time: float = 0.0
    outcome: SolveOutcome | None = None
    info: dict = field(default_factory=dict)


def solve_encoding(enc: Encoding, backend: SolverBackendConfig | None = None,
                   time_limit: float | None = None, workdir=None) -> SolveOutcome:
    backend = backend or default_backend()
    with tempfile.TemporaryDirectory(prefix="glitch-") as tmp:
        where = Path(workdir) if workdir else Path(tmp)
        where.mkdir(parents=True, exist_ok=True)
        lp = where / "model.lp"
        emit_lp(enc.instance, lp)
        return run_backend(lp, backend, time_limit, where, list(enc.instance.variables))


def _pattern_value(m: Ensemble, emap: EncodingMap, values, tag: str) -> float:
    total = 0.0
    for k in emap.trees:
        leaves = emap.leaves[(tag, k)]
        active = [lid for lid, name in leaves if values.get(name, 0.0) > 0.5]
        if len(active) != 1:
            raise EncodingSoundnessError(
                f"tree {k} in copy {tag} has {len(active)} active leaves")
        total += m.trees[k].node(active[0]).value
    return total


def _clamp_to_bits(v: float, preds, values, tol: float) -> float:
    """Move ``v`` into the cell its predicate bits describe if it is within
    ``tol`` of it; leave it alone otherwise (re-evaluation then disagrees)."""
    upper = min((t for t, name in preds if values.get(name, 0.0) > 0.5), default=math.inf)
    lower = max((t for t, name in preds if values.get(name, 0.0) <= 0.5), default=-math.inf)
    if v > upper and v - upper <= tol:
        v = upper
    if v <= lower and lower - v <= tol:
        v = math.nextafter(lower, math.inf)
    return v


def _selected_dim(emap: EncodingMap, values) -> int:
    if emap.dim is not None:
        return emap.dim
    picked = [j for j, name in emap.dim_select.items() if values.get(name, 0.0) > 0.5]
    if len(picked) != 1:
        raise EncodingSoundnessError(f"{len(picked)} dimensions selected")
    return picked[0]


def decode_solution(m: Ensemble, enc: Encoding | EncodingMap, outcome: SolveOutcome | dict,
                    tol: float = LEAF_TOL) -> GlitchTriple:
    """Read the three points from a solver assignment and verify them.

    Non-varying coordinates are copied from the middle point, every
    coordinate is clamped into the cell its predicate bits select (within a
    tolerance of the solver's feasibility slack), and the ensemble is
    re-evaluated.  Each copy's leaf-pattern sum must match the re-evaluation
    within ``tol``.  The returned triple carries the re-evaluated outputs.
    """
    emap = enc.map if isinstance(enc, Encoding) else enc
    values = outcome.assignment if isinstance(outcome, SolveOutcome) else outcome
    if values is None:
        raise ValueError("outcome has no assignment")
    i = _selected_dim(emap, values)
    ranges = [m.feature_space.range(j) for j in range(m.n_features)]
    pts = {}
    for tag in COPIES:
        x = []
        for j in range(m.n_features):
            src = tag if j == i else "c"
            v = float(values[emap.x[(src, j)]])
            v = _clamp_to_bits(v, emap.pred[(src, j)], values, 1e-6 * max(ranges[j], 1.0))
            x.append(v)
        pts[tag] = x
    sub = m.sub_ensemble(emap.trees) if len(emap.trees) != len(m.trees) else m
    for tag in COPIES:
        want = _pattern_value(m, emap, values, tag)
        got = sub.evaluate(pts[tag]) if emap.trees else 0.0
        if abs(want - got) > tol * max(1.0, abs(want)):
            raise EncodingSoundnessError(
                f"copy {tag}: solver leaf pattern sums to {want} but the ensemble "
                f"evaluates to {got} at {pts[tag]}")
    res = evaluate_triple(m, pts["m"], pts["c"], pts["p"])
    if isinstance(res, Rejection):
        raise EncodingSoundnessError(f"decoded points are not a glitch: {res.detail}")
    return res


def tighten_triple(m: Ensemble, triple: GlitchTriple, eps: float, bounds=None) -> GlitchTriple:
    """Shrink the gap without leaving any of the three cells.

    x- moves right to the nearest split (the closed end of its cell) and x+
    moves left to within ``eps`` of the split below it.  Outputs are
    unchanged, so the magnitude can only grow.
    """
    i = triple.dim
    lo, hi = bounds or m.feature_space.bounds[i]
    ts = [t for t in m.split_values(i) if lo <= t < hi]
    a = min((t for t in ts if t >= triple.x_minus[i]), default=None)
    b = max((t for t in ts if t < triple.x_plus[i]), default=None)
    if a is None or b is None or not a < triple.x[i] <= b:
        return triple
    xm, xp = list(triple.x_minus), list(triple.x_plus)
    xm[i] = a
    new_p = min(triple.x_plus[i], b + eps)
    if not new_p > b:
        new_p = math.nextafter(b, math.inf)
    xp[i] = new_p
    res = evaluate_triple(m, xm, triple.x, xp)
    if isinstance(res, Rejection) or res.outputs != triple.outputs:
        return triple
    return res


def closure_magnitude(m: Ensemble, triple: GlitchTriple, bounds=None) -> float:
    """Supremum magnitude over the three cells the triple lies in."""
    i = triple.dim
    lo, hi = bounds or m.feature_space.bounds[i]
    ts = [t for t in m.split_values(i) if lo <= t < hi]
    a = min((t for t in ts if t >= triple.x_minus[i]), default=None)
    b = max((t for t in ts if t < triple.x_plus[i]), default=None)
    if a is None or b is None or not b > a:
        return triple.magnitude
    jump = min(abs(triple.f - triple.f_minus), abs(triple.f - triple.f_plus))
    return jump / (b - a)


def _incumbent_triple(m, enc, outcome):
    vals = outcome.incumbent
    if not vals:
        return None
    if any(min(abs(vals.get(b, 0.0)), abs(vals.get(b, 0.0) - 1)) > 1e-5
           for b in enc.instance.binaries):
        return None
    try:
        return decode_solution(m, enc, vals)
    except EncodingSoundnessError:
        return None


def solve_decision(m: Ensemble, params: EncodingParams, dim: int | None = None,
                   backend: SolverBackendConfig | None = None,
                   time_limit: float | None = None, workdir=None) -> DecisionResult:
    """Is there a glitch of magnitude at least ``params.alpha`` (along ``dim``)?

    ``found`` results are re-evaluated and pass ``check_triple`` at alpha.
    A solution whose decode exposes a tolerance leak is re-solved once with
    the leaf guard on.
    """
    try:
        return _solve_decision(m, params, dim, backend, time_limit, workdir)
    except EncodingSoundnessError:
        if params.leaf_guard:
            raise
    return _solve_decision(m, replace(params, leaf_guard=True), dim, backend, time_limit,
                           workdir)


def _solve_decision(m, params, dim, backend, time_limit, workdir) -> DecisionResult:
    start = time.monotonic()
    enc = encode_decision(m, params, dim)
    outcome = solve_encoding(enc, backend, time_limit, workdir)
    info = {"variables": len(enc.instance.variables),
            "constraints": len(enc.instance.constraints), "mode": params.mode}
    if outcome.status == INFEASIBLE:
        return DecisionResult("none", None, time.monotonic() - start, outcome, info)
    if outcome.status == TIMEOUT:
        trip = _incumbent_triple(m, enc, outcome)
        if trip is not None:
            trip = tighten_triple(m, trip, params.eps_sep * m.feature_space.range(trip.dim),
                                  params.bounds(m)[trip.dim])
            ok = check_triple(m, *trip.points, params.alpha)
            if isinstance(ok, GlitchTriple):
                return DecisionResult("found", ok, time.monotonic() - start, outcome, info)
        return DecisionResult("timeout", None, time.monotonic() - start, outcome, info)
    if outcome.status == SOLVER_ERROR:
        raise SolverError(outcome.diagnostics)
    trip = decode_solution(m, enc, outcome)
    trip = tighten_triple(m, trip, params.eps_sep * m.feature_space.range(trip.dim),
                          params.bounds(m)[trip.dim])
    ok = check_triple(m, *trip.points, params.alpha)
    if isinstance(ok, Rejection):
        raise EncodingSoundnessError(f"decoded triple fails at alpha={params.alpha}: {ok.detail}")
    if params.mode == "delta" and not (ok.f_minus >= 0 and ok.f_plus >= 0) \
            and not (ok.f_minus < 0 and ok.f_plus < 0):
        raise EncodingSoundnessError("decoded triple breaks the sign pattern")
    return DecisionResult("found", ok, time.monotonic() - start, outcome, info)


def solve_max_magnitude(m: Ensemble, params: EncodingParams | None = None, tol: float = 1e-9,
                        dim: int | None = None, backend: SolverBackendConfig | None = None,
                        time_limit: float | None = None,
                        max_iterations: int = MAX_ITERATIONS) -> OracleResult:
    """Largest glitch magnitude by fractional-programming iteration.

    Each step maximizes ``jump - ratio * gap`` for the current ratio; the
    solution's cells give a new, exact supremum ratio; the loop stops when the
    step optimum is at most ``tol`` or the ratio stops improving.
    ``time_limit`` bounds the whole loop; on expiry the best triple so far
    is returned with status ``timeout``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    params = params or EncodingParams()
    if params.alpha is not None:
        params = replace(params, alpha=None)
    backend = backend or default_backend()
    bounds = params.bounds(m)
    start = time.monotonic()
    ratio, best, best_sup = 0.0, None, 0.0
    status, iterations = "exact", 0
    for iterations in range(1, max_iterations + 1):
        remaining = None
        if time_limit is not None:
            remaining = time_limit - (time.monotonic() - start)
            if remaining <= 0:
                status = "timeout"
                break
        enc = encode_max_step(m, params, ratio, dim)
        outcome = solve_encoding(enc, backend, remaining)
        if outcome.status == FEASIBLE and not params.leaf_guard:
            try:
                decode_solution(m, enc, outcome)
            except EncodingSoundnessError:
                # leaky near-integral solution: redo this step, guarded from now on
                params = replace(params, leaf_guard=True)
                continue
        if outcome.status == INFEASIBLE:
            break
        if outcome.status == SOLVER_ERROR:
            raise SolverError(outcome.diagnostics)
        if outcome.status == TIMEOUT:
            status = "timeout"
            trip = _incumbent_triple(m, enc, outcome)
            if trip is not None:
                sup = closure_magnitude(m, trip, bounds[trip.dim])
                if sup > best_sup:
                    best, best_sup = trip, sup
            break
        trip = decode_solution(m, enc, outcome)
        values = outcome.assignment
        step = sum(c * values[v] for v, c in enc.instance.objective.items()) \
            + enc.instance.objective_offset
        sup = closure_magnitude(m, trip, bounds[trip.dim])
        if sup > best_sup:
            best, best_sup = trip, sup
        if step <= tol or not sup > ratio:
            break
        ratio = sup
    else:
        status = "iteration_limit"
    info = {"iterations": iterations, "seconds": time.monotonic() - start,
            "output_space": "margin", "mode": params.mode}
    if best is None:
        return OracleResult(None, 0.0, False, params.eps_sep, dim, status, info)
    eps = params.eps_sep * m.feature_space.range(best.dim)
    best = tighten_triple(m, best, eps, bounds[best.dim])
    return OracleResult(best, best_sup, False, eps, best.dim, status, info)
