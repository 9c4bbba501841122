"""Exact glitch search by enumerating the threshold-induced cell grid.

Along one dimension an ensemble is a step function whose cells are
``[lo, b0], (b0, b1], ..., (b_{K-1}, hi]``.  A triple of cells ``a < b < c``
whose values oscillate gives glitches with ratio approaching
``jump / (b_{c-1} - b_a)``: ``x-`` may sit on the closed right end of cell
``a`` but ``x+`` only approaches the open left end of cell ``c``, so the
supremum is reported together with a witness placed ``delta`` inside cell
``c``.
"""
from __future__ import annotations

import bisect
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .ensemble import Ensemble, sigmoid
from .glitch import GlitchTriple, Rejection, Shape, evaluate_triple
from .problem import SearchProblem

DEFAULT_CELL_BUDGET = 10**6
_CHUNK_ROWS = 1 << 15


class BudgetExceeded(RuntimeError):
    def __init__(self, required: int, budget: int, dim: int):
        super().__init__(f"exhaustive search over dimension {dim} needs {required} "
                         f"base cells, above the budget of {budget}")
        self.required = required
        self.budget = budget
        self.dim = dim


@dataclass(frozen=True)
class SliceProfile:
    dim: int
    base: tuple[float, ...]
    lo: float
    hi: float
    breakpoints: tuple[float, ...]
    cell_values: tuple[float, ...]

    def __post_init__(self):
        if len(self.cell_values) != len(self.breakpoints) + 1:
            raise ValueError("need exactly one more cell value than breakpoints")

    def representatives(self) -> list[float]:
        return cell_representatives(self.breakpoints, self.lo, self.hi)

    def value_at(self, v: float) -> float:
        return self.cell_values[bisect.bisect_left(self.breakpoints, v)]


@dataclass(frozen=True)
class OracleResult:
    best: GlitchTriple | None
    sup_magnitude: float
    attained: bool
    witness_delta: float
    dim: int | None = None
    status: str = "exact"
    info: dict = field(default_factory=dict)

    def found(self, alpha: float) -> bool:
        return self.sup_magnitude > alpha


def breakpoints_in(thresholds, lo: float, hi: float) -> list[float]:
    """Thresholds that split ``[lo, hi]`` into nonempty cells."""
    return sorted({t for t in thresholds if lo <= t < hi})


def cell_representatives(bp, lo: float, hi: float) -> list[float]:
    edges = [lo, *bp, hi]
    reps = []
    for k in range(len(bp) + 1):
        left, right = edges[k], edges[k + 1]
        mid = 0.5 * (left + right)
        if k > 0 and not left < mid:
            mid = right
        reps.append(mid)
    return reps


def slice_profile(m: Ensemble, base, dim: int, bounds=None,
                  output_space: str = "margin") -> SliceProfile:
    """Exact piecewise-constant restriction of ``m`` along ``dim`` at ``base``."""
    if not 0 <= dim < m.n_features:
        raise ValueError(f"dimension {dim} out of range")
    base = tuple(float(v) for v in base)
    if len(base) != m.n_features:
        raise ValueError("base point has the wrong number of features")
    lo, hi = bounds if bounds is not None else m.feature_space.bounds[dim]
    bp = breakpoints_in(m.split_values(dim), lo, hi)
    reps = cell_representatives(bp, lo, hi)
    X = np.tile(np.asarray(base), (len(reps), 1))
    X[:, dim] = reps
    vals = m.evaluate_batch(X)
    if output_space == "probability":
        vals = sigmoid(vals)
    return SliceProfile(dim, base, float(lo), float(hi), tuple(bp), tuple(float(v) for v in vals))


def _best_rows(V: np.ndarray, bp: np.ndarray):
    """Best oscillating cell triple for every row of ``V``.

    Returns arrays (ratio, a, b, c, jump, canyon) with ratio 0 / a = -1 when
    a row has no oscillation.  Ties go to the smaller ``a``, then smaller ``c``.
    """
    n, cells = V.shape
    best = np.zeros(n)
    A = np.full(n, -1)
    B = np.full(n, -1)
    C = np.full(n, -1)
    J = np.zeros(n)
    S = np.zeros(n, dtype=bool)
    for a in range(cells - 2):
        va = V[:, a]
        lo_v = V[:, a + 1].copy()
        lo_i = np.full(n, a + 1)
        hi_v = lo_v.copy()
        hi_i = lo_i.copy()
        for c in range(a + 2, cells):
            vc = V[:, c]
            canyon = np.minimum(va, vc) - lo_v
            hill = hi_v - np.maximum(va, vc)
            is_canyon = canyon >= hill
            jump = np.where(is_canyon, canyon, hill)
            ratio = jump / (bp[c - 1] - bp[a])
            upd = (jump > 0) & (ratio > best)
            if upd.any():
                best[upd] = ratio[upd]
                A[upd] = a
                C[upd] = c
                B[upd] = np.where(is_canyon, lo_i, hi_i)[upd]
                J[upd] = jump[upd]
                S[upd] = is_canyon[upd]
            lower = vc < lo_v
            lo_v = np.where(lower, vc, lo_v)
            lo_i = np.where(lower, c, lo_i)
            higher = vc > hi_v
            hi_v = np.where(higher, vc, hi_v)
            hi_i = np.where(higher, c, hi_i)
    return best, A, B, C, J, S


def _witness_points(base, dim, bp, lo, hi, a, b, c, delta):
    reps = cell_representatives(bp, lo, hi)
    right_c = bp[c] if c < len(bp) else hi
    xp_i = min(bp[c - 1] + delta, right_c)
    if not xp_i > bp[c - 1]:
        xp_i = math.nextafter(bp[c - 1], math.inf)
    pts = []
    for v in (bp[a], reps[b], xp_i):
        p = list(base)
        p[dim] = float(v)
        pts.append(tuple(p))
    return pts


def _witness_delta(jump, gap, delta, alpha):
    # shrink delta so the witness itself clears alpha when the supremum does
    if alpha is not None and jump / gap > alpha:
        delta = min(delta, 0.5 * (jump / alpha - gap))
    return delta


def best_glitch_on_slice(profile: SliceProfile, witness_delta: float | None = None,
                         alpha: float | None = None) -> OracleResult:
    """Supremum glitch magnitude along a slice, with a near-supremum witness.

    ``witness_delta`` is absolute; by default one millionth of the slice range.
    """
    if witness_delta is None:
        witness_delta = 1e-6 * (profile.hi - profile.lo)
    bp = np.asarray(profile.breakpoints, dtype=float)
    V = np.asarray(profile.cell_values, dtype=float)[None, :]
    best, A, B, C, J, S = _best_rows(V, bp)
    if A[0] < 0:
        return OracleResult(None, 0.0, False, witness_delta, profile.dim)
    a, b, c = int(A[0]), int(B[0]), int(C[0])
    gap = bp[c - 1] - bp[a]
    delta = _witness_delta(J[0], gap, witness_delta, alpha)
    xm, x, xp = _witness_points(profile.base, profile.dim, profile.breakpoints,
                                profile.lo, profile.hi, a, b, c, delta)
    vals = profile.cell_values
    fm, f, fp = vals[a], vals[b], vals[c]
    triple = evaluate_triple(None, xm, x, xp, outputs=(fm, f, fp))
    if isinstance(triple, Rejection):
        raise RuntimeError(f"oracle witness rejected: {triple.reason}")
    return OracleResult(triple, float(best[0]), False, delta, profile.dim,
                        info={"cells": (a, b, c)})


def _grid_reps(m: Ensemble, bounds, dims) -> list[list[float]]:
    return [cell_representatives(breakpoints_in(m.split_values(j), *bounds[j]), *bounds[j])
            for j in dims]


def base_cell_count(m: Ensemble, dim: int, bounds=None) -> int:
    bounds = bounds or m.feature_space.bounds
    others = [j for j in range(m.n_features) if j != dim]
    return math.prod(len(r) for r in _grid_reps(m, bounds, others))


def _search_dim(m: Ensemble, dim: int, bounds, output_space: str):
    """Scan every base cell for ``dim``; returns (ratio, key, base, a, b, c, jump)."""
    others = [j for j in range(m.n_features) if j != dim]
    other_reps = _grid_reps(m, bounds, others)
    lo, hi = bounds[dim]
    bp = breakpoints_in(m.split_values(dim), lo, hi)
    reps = cell_representatives(bp, lo, hi)
    bp_arr = np.asarray(bp, dtype=float)
    best = None
    combos = itertools.product(*other_reps)
    offset = 0
    while True:
        chunk = list(itertools.islice(combos, _CHUNK_ROWS))
        if not chunk:
            break
        n = len(chunk)
        base = np.empty((n, m.n_features))
        if others:
            base[:, others] = np.asarray(chunk, dtype=float)
        V = np.empty((n, len(reps)))
        for k, r in enumerate(reps):
            base[:, dim] = r
            V[:, k] = m.evaluate_batch(base)
        if output_space == "probability":
            V = sigmoid(V)
        U, first = np.unique(V, axis=0, return_index=True)
        ratio, A, B, C, J, _ = _best_rows(U, bp_arr)
        if ratio.max() > 0:
            top = np.flatnonzero(ratio == ratio.max())
            # ties: smaller left breakpoint, then earlier base cell
            k = min(top, key=lambda r: (A[r], first[r]))
            cand = (float(ratio[k]), (int(A[k]), offset + int(first[k])))
            if best is None or cand[0] > best[0] or (cand[0] == best[0] and cand[1] < best[1]):
                row = chunk[int(first[k])]
                b = [0.0] * m.n_features
                for j, v in zip(others, row):
                    b[j] = float(v)
                best = (*cand, tuple(b), int(A[k]), int(B[k]), int(C[k]), float(J[k]))
        offset += n
    return best, bp


def _search_dim_job(args):
    m, dim, bounds, output_space = args
    return _search_dim(m, dim, bounds, output_space)


def exhaustive_search(m: Ensemble, problem: SearchProblem,
                      cell_budget: int = DEFAULT_CELL_BUDGET, jobs: int = 1) -> OracleResult:
    """Ground-truth search over one representative base point per grid cell.

    Exact because the ensemble is constant on every cell, so a triple's
    non-varying coordinates can be moved anywhere inside their cell.
    """
    bounds = problem.bounds(m)
    dims = problem.dims(m)
    for d in dims:
        need = base_cell_count(m, d, bounds)
        if need > cell_budget:
            raise BudgetExceeded(need, cell_budget, d)
    tasks = [(m, d, bounds, problem.output_space) for d in dims]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_search_dim_job, tasks))
    else:
        results = [_search_dim_job(t) for t in tasks]

    best_dim, best = None, None
    for d, (res, bp) in zip(dims, results):
        if res is not None and (best is None or res[0] > best[0][0]):
            best_dim, best = d, (res, bp)
    delta_rel = problem.witness_delta
    if best is None:
        return OracleResult(None, 0.0, False, delta_rel, problem.dim,
                            info={"output_space": problem.output_space})
    (sup, _, base, a, b, c, jump), bp = best
    lo, hi = bounds[best_dim]
    gap = bp[c - 1] - bp[a]
    alpha = problem.alpha if problem.variant != "max" else None
    delta = _witness_delta(jump, gap, delta_rel * (hi - lo), alpha)
    xm, x, xp = _witness_points(base, best_dim, bp, lo, hi, a, b, c, delta)
    triple = evaluate_triple(m, xm, x, xp, output_space=problem.output_space)
    if isinstance(triple, Rejection):
        raise RuntimeError(f"oracle witness failed re-evaluation: {triple.detail}")
    return OracleResult(triple, sup, False, delta, best_dim,
                        info={"cells": (a, b, c), "output_space": problem.output_space,
                              "left_breakpoint": bp[a], "right_breakpoint": bp[c - 1]})


def threshold_straddle(m: Ensemble, triple: GlitchTriple,
                       distinct_trees: bool = True) -> bool:
    """Whether thresholds ``a`` (tree s) and ``b`` (tree t) on the glitch
    dimension satisfy ``x-_i <= a < x_i <= b < x+_i``, with ``s != t`` when
    ``distinct_trees`` is set."""
    i = triple.dim
    lo_side = [(thr, t) for thr, t in m.thresholds_on_dimension(i)
               if triple.x_minus[i] <= thr < triple.x[i]]
    hi_side = [(thr, t) for thr, t in m.thresholds_on_dimension(i)
               if triple.x[i] <= thr < triple.x_plus[i]]
    if not distinct_trees:
        return bool(lo_side and hi_side)
    return any(s != t for _, s in lo_side for _, t in hi_side)


__all__ = [
    "BudgetExceeded", "DEFAULT_CELL_BUDGET", "OracleResult", "SliceProfile",
    "Shape", "base_cell_count", "best_glitch_on_slice", "breakpoints_in",
    "cell_representatives", "exhaustive_search", "slice_profile", "threshold_straddle",
]
