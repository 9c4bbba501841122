"""MILP encodings of the glitch search problems.

Three copies of the ensemble (``m`` for x-, ``c`` for x, ``p`` for x+) share
one consistency encoding each.  Predicates are indexed by distinct
``(feature, threshold)`` pairs so equal splits in different trees reuse one
binary, and threshold ordering becomes a chain ``p_k <= p_{k+1}``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from ..ensemble import Ensemble
from .instance import BINARY, CONTINUOUS, MilpInstance

COPIES = ("m", "c", "p")
MODES = ("general", "delta")
DEFAULT_JUMP_FLOOR = 1e-6
# integrality tolerance the bundled backends run with
INTEGRALITY_TOL = 1e-7
LEAK_SAFETY = 10.0


@dataclass(frozen=True)
class EncodingParams:
    """Knobs shared by every encoding.

    ``eps_sep`` is a fraction of each feature's range and stands in for
    strict inequalities.  ``jump_floor`` is the smallest output change that
    counts as a strict rise or fall.  ``big_m="auto"`` derives per-constraint
    constants from bounds and leaf values.  ``leaf_guard`` widens the jump
    margins to cover leaf activations that are only near-integral; it costs
    solve time, so searches switch it on only after a decode catches a leak.
    """

    alpha: float | None = None
    eps_sep: float = 1e-6
    big_m: float | str = "auto"
    mode: str = "general"
    region: dict[int, tuple[float, float]] = field(default_factory=dict)
    jump_floor: float = DEFAULT_JUMP_FLOOR
    leaf_guard: bool = False

    def __post_init__(self):
        if not self.eps_sep > 0:
            raise ValueError("eps_sep must be positive")
        if not self.jump_floor > 0:
            raise ValueError("jump_floor must be positive")
        if self.mode not in MODES:
            raise ValueError(f"unknown oscillation mode {self.mode!r}")
        if self.alpha is not None and not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.big_m != "auto" and not (isinstance(self.big_m, (int, float)) and self.big_m > 0):
            raise ValueError("big_m must be 'auto' or a positive number")

    def bounds(self, m: Ensemble) -> list[tuple[float, float]]:
        out = []
        for j, (lo, hi) in enumerate(m.feature_space.bounds):
            if j in self.region:
                rlo, rhi = self.region[j]
                if rlo > rhi or rlo < lo or rhi > hi:
                    raise ValueError(f"region [{rlo}, {rhi}] for feature {j} is not "
                                     f"within its bounds [{lo}, {hi}]")
                lo, hi = rlo, rhi
            out.append((float(lo), float(hi)))
        return out

    def separation(self, m: Ensemble) -> list[float]:
        return [self.eps_sep * (m.feature_space.range(j) or 1.0) for j in range(m.n_features)]


@dataclass
class EncodingMap:
    """Where to find the pieces of a solution in the variable assignment."""

    n_features: int
    dim: int | None
    trees: list[int]
    x: dict[tuple[str, int], str] = field(default_factory=dict)
    pred: dict[tuple[str, int], list[tuple[float, str]]] = field(default_factory=dict)
    leaves: dict[tuple[str, int], list[tuple[int, str]]] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    dim_select: dict[int, str] = field(default_factory=dict)
    mode: str = "general"
    alpha: float | None = None


@dataclass
class Encoding:
    instance: MilpInstance
    map: EncodingMap
    params: EncodingParams


def _thresholds_by_feature(m: Ensemble, trees: list[int]) -> dict[int, list[float]]:
    out: dict[int, set] = {}
    for k in trees:
        for n in m.trees[k].internal_nodes:
            out.setdefault(n.feature, set()).add(n.threshold)
    return {j: sorted(v) for j, v in out.items()}


def _output_range(m: Ensemble, trees: list[int]) -> tuple[float, float]:
    lo = sum(min(l.value for l in m.trees[k].leaves) for k in trees)
    hi = sum(max(l.value for l in m.trees[k].leaves) for k in trees)
    return lo, hi


def encode_consistency(m: Ensemble, copy_tag: str, params: EncodingParams | None = None,
                       inst: MilpInstance | None = None, emap: EncodingMap | None = None,
                       trees: list[int] | None = None, shared: set[int] | None = None
                       ) -> tuple[MilpInstance, EncodingMap]:
    """Add one consistency copy of ``m`` (inputs, predicates, leaves, output).

    Features in ``shared`` reuse the input and predicate variables of an
    earlier copy, which is how the non-varying coordinates are tied together
    in the fixed-dimension encoding.
    """
    params = params or EncodingParams()
    inst = inst if inst is not None else MilpInstance()
    trees = list(range(len(m.trees))) if trees is None else trees
    emap = emap or EncodingMap(m.n_features, None, trees)
    shared = shared or set()
    bounds = params.bounds(m)
    sep = params.separation(m)
    thr = _thresholds_by_feature(m, trees)
    tag = copy_tag

    for j in range(m.n_features):
        lo, hi = bounds[j]
        if j in shared:
            owner = "s"
        else:
            owner = tag
        xname = f"x_{owner}_{j}"
        if xname not in inst.variables:
            inst.add_var(xname, CONTINUOUS, lo, hi)
            preds = []
            ts = thr.get(j, [])
            for k, t in enumerate(ts):
                pname = f"p_{owner}_{j}_{k}"
                if t < lo:
                    inst.add_var(pname, BINARY, 0, 0)
                elif t >= hi:
                    inst.add_var(pname, BINARY, 1, 1)
                else:
                    inst.add_var(pname, BINARY)
                    e = min(sep[j], hi - t)
                    # p = 1 => x <= t ; p = 0 => x >= t + e
                    inst.add_constraint(f"ub_{owner}_{j}_{k}", [(1, xname), (hi - t, pname)],
                                        "<=", hi)
                    inst.add_constraint(f"lb_{owner}_{j}_{k}",
                                        [(1, xname), (t + e - lo, pname)], ">=", t + e)
                if k > 0:
                    inst.add_constraint(f"ord_{owner}_{j}_{k}",
                                        [(1, preds[-1][1]), (-1, pname)], "<=", 0)
                preds.append((t, pname))
            emap.pred[(owner, j)] = preds
        emap.x[(tag, j)] = xname
        if (tag, j) not in emap.pred:
            emap.pred[(tag, j)] = emap.pred[(owner, j)]

    pidx = {j: {t: k for k, t in enumerate(ts)} for j, ts in thr.items()}
    lo_out, hi_out = _output_range(m, trees)
    out_terms = []
    for k in trees:
        tree = m.trees[k]
        leaf_vars = {}
        for leaf in tree.leaves:
            name = f"l_{tag}_{k}_{leaf.id}"
            inst.add_var(name, CONTINUOUS, 0, 1)
            leaf_vars[leaf.id] = name
            out_terms.append((leaf.value, name))
        emap.leaves[(tag, k)] = sorted(leaf_vars.items())
        inst.add_constraint(f"one_{tag}_{k}", [(1, v) for v in leaf_vars.values()], "=", 1)
        for n in tree.internal_nodes:
            owner = "s" if n.feature in shared else tag
            pname = f"p_{owner}_{n.feature}_{pidx[n.feature][n.threshold]}"
            # leaves under the true branch need the predicate, the false branch its negation
            t_leaves = [(1, leaf_vars[l]) for l in tree.leaves_under(n.true_child)]
            f_leaves = [(1, leaf_vars[l]) for l in tree.leaves_under(n.false_child)]
            inst.add_constraint(f"lt_{tag}_{k}_{n.id}", t_leaves + [(-1, pname)], "<=", 0)
            inst.add_constraint(f"lf_{tag}_{k}_{n.id}", f_leaves + [(1, pname)], "<=", 1)
    yname = f"y_{tag}"
    inst.add_var(yname, CONTINUOUS, lo_out, hi_out)
    inst.add_constraint(f"out_{tag}", out_terms + [(-1, yname)], "=", 0)
    emap.outputs[tag] = yname
    return inst, emap


def _relevant_trees(m: Ensemble, dim: int | None, mode: str) -> list[int]:
    if dim is None or mode == "delta":
        return list(range(len(m.trees)))
    # with the other coordinates shared, trees that never test dim contribute
    # the same value to all three copies and cancel out of every jump
    return [k for k, t in enumerate(m.trees) if dim in t.features()]


def _base(m: Ensemble, params: EncodingParams, dim: int | None):
    if dim is not None and not 0 <= dim < m.n_features:
        raise ValueError(f"dimension {dim} out of range")
    trees = _relevant_trees(m, dim, params.mode)
    inst = MilpInstance()
    emap = EncodingMap(m.n_features, dim, trees, mode=params.mode, alpha=params.alpha)
    shared = set(range(m.n_features)) - {dim} if dim is not None else set()
    for tag in COPIES:
        encode_consistency(m, tag, params, inst, emap, trees, shared)
    bounds = params.bounds(m)
    sep = params.separation(m)
    if dim is not None:
        i = dim
        xm, xc, xp = (emap.x[(t, i)] for t in COPIES)
        inst.add_constraint("sep_mc", [(1, xc), (-1, xm)], ">=", sep[i])
        inst.add_constraint("sep_cp", [(1, xp), (-1, xc)], ">=", sep[i])
        gap = [(1, xp), (-1, xm)]
        gap_slack = [(sep[i], None)]
        gmax = bounds[i][1] - bounds[i][0]
    else:
        d = []
        for j in range(m.n_features):
            name = inst.add_var(f"d_{j}", BINARY)
            emap.dim_select[j] = name
            d.append((1, name))
            rng = bounds[j][1] - bounds[j][0]
            for a, b in (("m", "c"), ("c", "p")):
                xa, xb = emap.x[(a, j)], emap.x[(b, j)]
                inst.add_constraint(f"dup_{a}{b}_{j}", [(1, xb), (-1, xa), (-rng, name)], "<=", 0)
                inst.add_constraint(f"dlo_{a}{b}_{j}", [(1, xb), (-1, xa), (-sep[j], name)],
                                    ">=", 0)
        inst.add_constraint("one_dim", d, "=", 1)
        gap = []
        gap_slack = []
        for j in range(m.n_features):
            gap += [(1, emap.x[("p", j)]), (-1, emap.x[("m", j)])]
            gap_slack.append((sep[j], emap.dim_select[j]))
        gmax = max(b[1] - b[0] for b in bounds)
    lo_out, hi_out = _output_range(m, trees)
    return inst, emap, gap, gap_slack, gmax, (lo_out, hi_out)


def _leaf_leak(m: Ensemble, trees: list[int], params: EncodingParams) -> float:
    """Output error per unit of fractional leaf activation, summed over trees
    (zero unless the leaf guard is on)."""
    if not params.leaf_guard:
        return 0.0
    total = 0.0
    for k in trees:
        vals = [l.value for l in m.trees[k].leaves]
        total += max(1, m.trees[k].depth) * (max(vals) - min(vals))
    return total


def _shape_constraints(inst: MilpInstance, emap: EncodingMap, params: EncodingParams,
                       jump_terms, big_m: float, crange, leak: float):
    """Sign-resolved jumps selected by the shape binary ``s`` (1 = canyon).

    ``jump_terms`` are the terms subtracted from each jump, so the rows read
    ``jump - rhs_terms >= 0`` on the active branch.  Solvers accept binaries
    that are only integral up to a tolerance, which lets a big-M row leak
    ``M * tol``; every row keeps a margin of ten times that leak so a
    near-integral ``s`` or leaf pattern can never fake a jump or a sign.
    """
    s = inst.add_var("s", BINARY)
    ym, yc, yp = (emap.outputs[t] for t in COPIES)
    lo_out, hi_out = crange
    width = hi_out - lo_out
    scale = width + abs(lo_out) + abs(hi_out) + leak + 1.0
    floor = max(params.jump_floor, LEAK_SAFETY * INTEGRALITY_TOL * scale)
    margin = LEAK_SAFETY * INTEGRALITY_TOL * (2 * big_m + leak)
    big_m = big_m + margin
    m_floor = width + floor
    for side, y in (("m", ym), ("p", yp)):
        neg = [(-c, v) for c, v in jump_terms]
        # canyon: y_side - y_c >= jump_terms  when s = 1
        inst.add_constraint(f"cj_{side}", [(1, y), (-1, yc)] + neg + [(-big_m, s)], ">=",
                            margin - big_m)
        inst.add_constraint(f"hj_{side}", [(1, yc), (-1, y)] + neg + [(big_m, s)], ">=", margin)
        inst.add_constraint(f"cf_{side}", [(1, y), (-1, yc), (-m_floor, s)], ">=", floor - m_floor)
        inst.add_constraint(f"hf_{side}", [(1, yc), (-1, y), (m_floor, s)], ">=", floor)
    if params.mode == "delta":
        # the nonnegative side also keeps a floor, so leaks cannot flip a sign
        b_lo = max(0.0, -lo_out) + floor
        b_hi = max(0.0, hi_out) + floor
        for side, y in (("m", ym), ("p", yp)):
            # canyon: y_side >= floor ; hill: y_side <= -floor
            inst.add_constraint(f"dc_{side}", [(1, y), (-b_lo, s)], ">=", floor - b_lo)
            inst.add_constraint(f"dh_{side}", [(1, y), (-b_hi, s)], "<=", -floor)
        # canyon: y_c <= -floor ; hill: y_c >= floor
        inst.add_constraint("dc_c", [(1, yc), (b_hi, s)], "<=", b_hi - floor)
        inst.add_constraint("dh_c", [(1, yc), (b_lo, s)], ">=", floor)
    return s


def _big_m(params, auto: float) -> float:
    return auto if params.big_m == "auto" else float(params.big_m)


def encode_decision(m: Ensemble, params: EncodingParams, dim: int | None = None) -> Encoding:
    """Feasibility model: a glitch of magnitude at least ``alpha`` along ``dim``
    (or along a solver-chosen dimension when ``dim`` is None)."""
    if params.alpha is None or not params.alpha > 0:
        raise ValueError("the decision encoding needs alpha > 0")
    inst, emap, gap, _, gmax, crange = _base(m, params, dim)
    alpha = params.alpha
    auto = (crange[1] - crange[0]) + alpha * gmax + params.jump_floor
    _shape_constraints(inst, emap, params, [(alpha * c, v) for c, v in gap],
                       _big_m(params, auto), crange, _leaf_leak(m, emap.trees, params))
    inst.set_objective([])
    return Encoding(inst, emap, params)


def encode_delta_variant(m: Ensemble, params: EncodingParams, dim: int | None = None) -> Encoding:
    """Decision model whose oscillation test is the sign pattern around 0."""
    if params.mode != "delta":
        params = replace(params, mode="delta")
    return encode_decision(m, params, dim)


def encode_max_step(m: Ensemble, params: EncodingParams, ratio: float,
                    dim: int | None = None) -> Encoding:
    """One fractional-programming step: maximize ``t - ratio * gap'``.

    ``t`` is the smaller of the two jumps and ``gap'`` is the dim-gap minus
    the separation forced on x+, i.e. the closure gap between the two
    thresholds the triple straddles.
    """
    if ratio < 0:
        raise ValueError("ratio must be nonnegative")
    inst, emap, gap, gap_slack, _, crange = _base(m, params, dim)
    width = crange[1] - crange[0]
    t = inst.add_var("t", CONTINUOUS, params.jump_floor, max(width, params.jump_floor))
    if width < params.jump_floor:
        # no two outputs differ enough to form a glitch
        inst.add_constraint("no_jump", [(1, t)], "<=", width)
    _shape_constraints(inst, emap, params, [(1, t)], _big_m(params, 2 * width + params.jump_floor),
                       crange, _leaf_leak(m, emap.trees, params))
    obj = [(1, t)] + [(-ratio * c, v) for c, v in gap]
    for c, v in gap_slack:
        if v is None:
            continue
        obj.append((ratio * c, v))
    inst.set_objective(obj)
    emap.alpha = ratio
    inst.objective_offset = sum(ratio * c for c, v in gap_slack if v is None)
    return Encoding(inst, emap, params)


def closure_gap(m: Ensemble, dim: int, lo_v: float, hi_v: float, bounds) -> float:
    """Distance between the smallest split >= ``lo_v`` and the largest split
    below ``hi_v`` on ``dim``; the supremum gap's denominator for the cells
    containing ``lo_v`` and ``hi_v``."""
    lo, hi = bounds
    ts = [t for t in m.split_values(dim) if lo <= t < hi]
    left = min((t for t in ts if t >= lo_v), default=math.nan)
    right = max((t for t in ts if t < hi_v), default=math.nan)
    return right - left
