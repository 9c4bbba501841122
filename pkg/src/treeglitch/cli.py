"""Command-line interface.

Exit codes: 0 glitch found / triple accepted, 1 no glitch / triple rejected,
2 usage or input error, 3 solver error, 4 timeout.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

from . import __version__
from .analysis import (LabeledDataset, classify_violation, export_slice_csv,
                       monotonicity_sample, slice_csv_text)
from .bench import bench_csv, run_bench
from .ensemble import Ensemble, ModelError, load_ensemble, save_ensemble
from .glitch import GlitchTriple, Rejection, check_triple, evaluate_triple
from .milp.backends import SolverError, default_backend
from .milp.encode import EncodingParams, encode_decision, encode_max_step
from .milp.lpformat import emit_lp
from .milp.search import EncodingSoundnessError, solve_decision, solve_max_magnitude
from .oracle import BudgetExceeded, DEFAULT_CELL_BUDGET, base_cell_count, exhaustive_search
from .problem import SearchProblem
from .satgen import CnfError, parse_dimacs, reduce
from .smt import SmtError, emit_smt

SCHEMA = 1
EXIT_FOUND, EXIT_NONE, EXIT_USAGE, EXIT_SOLVER, EXIT_TIMEOUT = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


def _emit(args, report: dict, text: str) -> None:
    report = {"schema": SCHEMA, **report}
    body = json.dumps(report, indent=1) + "\n" if args.json else text.rstrip("\n") + "\n"
    if getattr(args, "output", None) and args.output != "-":
        Path(args.output).write_text(body)
    else:
        sys.stdout.write(body)


def _model(args) -> Ensemble:
    if not args.model:
        raise UsageError("--model is required")
    names = args.feature_names.split(",") if getattr(args, "feature_names", None) else None
    return load_ensemble(args.model, args.model_format, args.normalized, names)


def _dim(m: Ensemble, spec) -> int | None:
    return None if spec is None else m.feature_space.index(spec)


def _region(m: Ensemble, specs) -> dict[int, tuple[float, float]]:
    out = {}
    for spec in specs or []:
        try:
            name, rng = spec.split("=", 1)
            lo, hi = (float(v) for v in rng.split(":"))
        except ValueError:
            raise UsageError(f"region {spec!r} must look like name=lo:hi") from None
        out[m.feature_space.index(name)] = (lo, hi)
    return out


def _triple_json(t: GlitchTriple | None, m: Ensemble | None = None, names=None):
    if t is None:
        return None
    names = names or (m.feature_space.names if m is not None else None)
    return t.to_json(names)


def _triple_text(t: GlitchTriple, names=None) -> str:
    dim = names[t.dim] if names else str(t.dim)
    return (f"{t.shape.value} along {dim}: "
            f"{dim} = {t.x_minus[t.dim]!r}, {t.x[t.dim]!r}, {t.x_plus[t.dim]!r}; "
            f"outputs {t.f_minus!r}, {t.f!r}, {t.f_plus!r}; magnitude {t.magnitude!r}")


# -- check -------------------------------------------------------------------

def _read_triple(path, m: Ensemble | None):
    doc = json.loads(Path(path).read_text())
    if not isinstance(doc, dict) or "points" not in doc:
        raise UsageError(f"{path}: expected an object with 'points'")
    pts = doc["points"]
    if len(pts) != 3:
        raise UsageError(f"{path}: need exactly three points")
    names = doc.get("feature_names")
    if m is not None:
        names = names or list(m.feature_space.names)
    out = []
    for p in pts:
        if isinstance(p, dict):
            if m is None and names is None:
                names = list(p)
            order = names if names is not None else list(p)
            missing = [n for n in order if n not in p]
            if missing:
                raise UsageError(f"{path}: point lacks {missing}")
            out.append([float(p[n]) for n in order])
        else:
            out.append([float(v) for v in p])
    if m is not None and names is not None and list(names) != list(m.feature_space.names):
        # reorder to the model's feature order
        pos = {n: k for k, n in enumerate(names)}
        try:
            out = [[p[pos[n]] for n in m.feature_space.names] for p in out]
        except KeyError as err:
            raise UsageError(f"{path}: missing feature {err.args[0]!r}") from None
        names = list(m.feature_space.names)
    outputs = doc.get("outputs")
    return out, outputs, doc.get("output_space"), names


def cmd_check(args) -> int:
    m = _model(args) if args.model else None
    pts, outputs, space, names = _read_triple(args.triple, m)
    space = args.output_space or space or "margin"
    if outputs is None and m is None:
        raise UsageError("the triple has no outputs; pass --model to evaluate it")
    if outputs is not None and args.model and args.recompute:
        outputs = None
    f = m if m is not None else None
    if args.alpha is not None:
        res = check_triple(f, *pts, args.alpha, outputs=outputs, output_space=space)
    else:
        res = evaluate_triple(f, *pts, outputs=outputs, output_space=space)
    if isinstance(res, Rejection):
        _emit(args, {"command": "check", "status": "rejected", "reason": res.reason,
                     "detail": res.detail, "magnitude": res.magnitude, "alpha": args.alpha,
                     "output_space": space},
              f"rejected ({res.reason}): {res.detail}")
        return EXIT_NONE
    _emit(args, {"command": "check", "status": "accepted", "alpha": args.alpha,
                 "output_space": space, "triple": res.to_json(names)},
          f"accepted: {_triple_text(res, names)} [{space}]")
    return EXIT_FOUND


# -- find --------------------------------------------------------------------

def _within_budget(m, problem, budget) -> bool:
    bounds = problem.bounds(m)
    return all(base_cell_count(m, d, bounds) <= budget for d in problem.dims(m))


def cmd_find(args) -> int:
    m = _model(args)
    dim = _dim(m, args.dim)
    variant = args.variant
    if variant == "fixed_dim" and dim is None:
        raise UsageError("--variant fixed_dim needs --dim")
    if variant == "any_dim" and dim is not None:
        raise UsageError("--variant any_dim does not take --dim")
    if variant != "max" and args.alpha is None:
        raise UsageError(f"--variant {variant} needs --alpha")
    if args.exact and args.milp:
        raise UsageError("--exact and --milp are mutually exclusive")
    region = _region(m, args.region)
    problem = SearchProblem(variant, args.alpha, dim, region, args.eps_sep,
                            args.witness_delta, args.output_space)
    problem.bounds(m)
    if args.exact:
        route = "oracle"
    elif args.milp:
        route = "milp"
    else:
        route = "oracle" if args.mode == "general" and \
            _within_budget(m, problem, args.cell_budget) else "milp"
    if route == "oracle" and args.mode == "delta":
        raise UsageError("the exact route implements the general oscillation test only")
    if route == "milp" and args.output_space == "probability":
        raise UsageError("the MILP route works on margins; use --exact for probability space")
    start = time.monotonic()
    report = {"command": "find", "variant": variant, "alpha": args.alpha,
              "dim": m.feature_space.names[dim] if dim is not None else None,
              "route": route, "output_space": args.output_space, "mode": args.mode}
    triple, status, extra = None, "none", {}
    if route == "oracle":
        res = exhaustive_search(m, problem, args.cell_budget, args.jobs)
        extra = {"sup_magnitude": res.sup_magnitude, "attained": res.attained,
                 "witness_delta": res.witness_delta}
        hit = res.sup_magnitude > (args.alpha if variant != "max" else 0.0)
        if hit:
            triple, status = res.best, "found"
    else:
        backend = default_backend(args.solver)
        report["solver"] = backend.name
        params = EncodingParams(args.alpha if variant != "max" else None, args.eps_sep,
                                mode=args.mode, region=region)
        if variant == "max":
            res = solve_max_magnitude(m, params, args.tol, dim, backend, args.time_limit)
            extra = {"sup_magnitude": res.sup_magnitude, "iterations": res.info["iterations"]}
            if res.best is not None:
                triple, status = res.best, "found"
            if res.status == "timeout":
                status = "timeout" if res.best is None else "found"
                extra["timed_out"] = True
        else:
            res = solve_decision(m, params, dim, backend, args.time_limit)
            triple, status = res.triple, res.status
            extra = dict(res.info)
    report.update(extra)
    report["status"] = status
    report["triple"] = _triple_json(triple, m)
    report["wall_time"] = time.monotonic() - start
    if status == "found":
        text = f"found: {_triple_text(triple, m.feature_space.names)}"
        if "sup_magnitude" in extra:
            text += f"\nsupremum magnitude {extra['sup_magnitude']!r}"
    elif status == "timeout":
        text = "timeout: no glitch found before the time limit"
    else:
        text = "no glitch exists" + (f" above alpha {args.alpha}" if args.alpha else "")
    text += f"\nroute {route}, {args.output_space} space, {args.mode} oscillation test, " \
            f"{report['wall_time']:.3f} s"
    _emit(args, report, text)
    return {"found": EXIT_FOUND, "none": EXIT_NONE, "timeout": EXIT_TIMEOUT}.get(status,
                                                                               EXIT_SOLVER)


# -- encode ------------------------------------------------------------------

def cmd_encode(args) -> int:
    m = _model(args)
    dim = _dim(m, args.dim)
    region = _region(m, args.region)
    if args.variant == "fixed_dim" and dim is None:
        raise UsageError("--variant fixed_dim needs --dim")
    if args.variant == "any_dim":
        dim = None
    if not args.output or args.output == "-":
        raise UsageError("--output is required")
    if args.variant == "max":
        if args.format == "smt":
            raise UsageError("the SMT encoding covers the decision variants only")
        enc = encode_max_step(m, EncodingParams(None, args.eps_sep, mode=args.mode,
                                                region=region), args.ratio, dim)
    else:
        if args.alpha is None:
            raise UsageError("--alpha is required for decision encodings")
        params = EncodingParams(args.alpha, args.eps_sep, mode=args.mode, region=region)
        if args.format == "smt":
            emit_smt(m, params, dim, args.output)
            return EXIT_FOUND
        enc = encode_decision(m, params, dim)
    emit_lp(enc.instance, args.output)
    return EXIT_FOUND


# -- reduce ------------------------------------------------------------------

def cmd_reduce(args) -> int:
    phi = parse_dimacs(args.dimacs, pad=args.pad)
    red = reduce(phi, args.epsilon)
    save_ensemble(red.ensemble, args.model_out)
    manifest = {"schema": SCHEMA, "model": str(args.model_out), "alpha": red.alpha,
                "dim": red.ensemble.feature_space.names[red.dim], "dim_index": red.dim,
                "epsilon": red.epsilon, "trees": len(red.ensemble.trees),
                "variables": phi.num_vars, "clauses": phi.num_clauses}
    text = json.dumps(manifest, indent=1) + "\n"
    if args.manifest:
        Path(args.manifest).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_FOUND


# -- slice / monotonicity / classify -------------------------------------------

def _point(m_or_n, spec: str | None, default=None) -> list[float]:
    if spec is None:
        return default
    try:
        return [float(v) for v in spec.split(",")]
    except ValueError:
        raise UsageError(f"point {spec!r} must be comma-separated numbers") from None


def cmd_slice(args) -> int:
    m = _model(args)
    dim = _dim(m, args.dim)
    if dim is None:
        raise UsageError("--dim is required")
    mid = [0.5 * (lo + hi) for lo, hi in m.feature_space.bounds]
    base = _point(m, args.base, mid)
    if len(base) != m.n_features:
        raise UsageError(f"--base needs {m.n_features} values")
    rows = export_slice_csv(m, base, dim, args.resolution, args.output_space)
    text = slice_csv_text(rows)
    if args.output and args.output != "-":
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_FOUND


def cmd_monotonicity(args) -> int:
    m = _model(args)
    rep = monotonicity_sample(m, args.samples, args.seed, args.step)
    _emit(args, {"command": "monotonicity", "output_space": "margin", **rep.to_json()},
          f"{rep.non_monotonic} of {rep.samples} sampled points "
          f"({rep.percent:.2f}%) show a non-monotonic local pattern")
    return EXIT_FOUND if rep.non_monotonic else EXIT_NONE


def cmd_classify(args) -> int:
    names = args.feature_names.split(",") if args.feature_names else None
    ds = LabeledDataset.from_csv(args.data, args.label_column, names)
    if args.point is not None:
        x = _point(None, args.point)
    elif args.triple:
        pts, _, _, tnames = _read_triple(args.triple, None)
        x = pts[1]
        if tnames is not None and ds.feature_names and list(tnames) != list(ds.feature_names):
            pos = {n: k for k, n in enumerate(tnames)}
            x = [x[pos[n]] for n in ds.feature_names]
    else:
        raise UsageError("give --point or --triple")
    res = classify_violation(ds, x, args.epsilon, args.norm)
    text = f"{res.verdict}: {len(res.neighbors)} training points within {args.epsilon}"
    if res.note:
        text += f" ({res.note})"
    _emit(args, {"command": "classify", "epsilon": args.epsilon, "norm": args.norm,
                 **res.to_json()}, text)
    return EXIT_FOUND


# -- bench -------------------------------------------------------------------

def _ints(spec: str) -> list[int]:
    try:
        return [int(v) for v in spec.split(",") if v]
    except ValueError:
        raise UsageError(f"{spec!r} must be comma-separated integers") from None


def cmd_bench(args) -> int:
    backend = default_backend(args.solver)
    rows = run_bench(_ints(args.trees), _ints(args.depths), _ints(args.features), args.seed,
                     alpha=args.alpha, time_limit=args.time_limit, backend=backend,
                     dims_per_cell=args.dims_per_cell, threshold_bins=args.threshold_bins,
                     jobs=args.jobs)
    text = bench_csv(rows)
    if args.output and args.output != "-":
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_FOUND


# -- parser ------------------------------------------------------------------

def _positive(v: str) -> float:
    x = float(v)
    if not x > 0 or not math.isfinite(x):
        raise argparse.ArgumentTypeError(f"{v} is not a positive number")
    return x


def _model_flags(p, required=True):
    p.add_argument("--model", required=required, help="model file")
    p.add_argument("--model-format", default="native", choices=["native", "xgboost"])
    p.add_argument("--feature-names", help="comma-separated names for XGBoost dumps")
    p.add_argument("--normalized", action="store_true",
                   help="default feature bounds to [0, 1]")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="treeglitch",
                                 description="Find and check glitches in tree ensembles.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="verify a candidate triple")
    _model_flags(p, required=False)
    p.add_argument("--triple", required=True)
    p.add_argument("--alpha", type=_positive)
    p.add_argument("--output-space", choices=["margin", "probability"])
    p.add_argument("--recompute", action="store_true",
                   help="evaluate the model even if the file has outputs")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("find", help="search for a glitch")
    _model_flags(p)
    p.add_argument("--variant", default="any_dim", choices=["fixed_dim", "any_dim", "max"])
    p.add_argument("--alpha", type=_positive)
    p.add_argument("--dim")
    p.add_argument("--region", action="append", metavar="NAME=LO:HI")
    p.add_argument("--eps-sep", type=_positive, default=1e-6)
    p.add_argument("--witness-delta", type=_positive, default=1e-6)
    p.add_argument("--mode", default="general", choices=["general", "delta"])
    p.add_argument("--output-space", default="margin", choices=["margin", "probability"])
    route = p.add_mutually_exclusive_group()
    route.add_argument("--exact", action="store_true", help="force exhaustive search")
    route.add_argument("--milp", action="store_true", help="force the MILP route")
    p.add_argument("--cell-budget", type=int, default=DEFAULT_CELL_BUDGET)
    p.add_argument("--solver", help="highs, cbc or a JSON backend file")
    p.add_argument("--time-limit", type=_positive)
    p.add_argument("--tol", type=_positive, default=1e-9)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_find)

    p = sub.add_parser("encode", help="write an LP or SMT-LIB file without solving")
    _model_flags(p)
    p.add_argument("--variant", default="fixed_dim", choices=["fixed_dim", "any_dim", "max"])
    p.add_argument("--format", default="lp", choices=["lp", "smt"])
    p.add_argument("--alpha", type=_positive)
    p.add_argument("--ratio", type=float, default=0.0,
                   help="ratio for one max-magnitude step")
    p.add_argument("--dim")
    p.add_argument("--region", action="append", metavar="NAME=LO:HI")
    p.add_argument("--eps-sep", type=_positive, default=1e-6)
    p.add_argument("--mode", default="general", choices=["general", "delta"])
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("reduce", help="turn a 3-CNF DIMACS file into a model")
    p.add_argument("--dimacs", required=True)
    p.add_argument("--pad", action="store_true", help="pad short clauses")
    p.add_argument("--epsilon", type=_positive)
    p.add_argument("--model-out", required=True)
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("slice", help="CSV of the model along one feature")
    _model_flags(p)
    p.add_argument("--dim", required=True)
    p.add_argument("--base", help="comma-separated base point (default: box centre)")
    p.add_argument("--resolution", type=int, default=200)
    p.add_argument("--output-space", default="margin", choices=["margin", "probability"])
    p.set_defaults(func=cmd_slice)

    p = sub.add_parser("monotonicity", help="sample local monotonicity violations")
    _model_flags(p)
    p.add_argument("--samples", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step", type=_positive, required=True)
    p.set_defaults(func=cmd_monotonicity)

    p = sub.add_parser("classify", help="anticipated / unanticipated verdict")
    p.add_argument("--data", required=True, help="CSV with a header row")
    p.add_argument("--label-column", default="label")
    p.add_argument("--feature-names", help="comma-separated feature columns")
    p.add_argument("--point")
    p.add_argument("--triple", help="use the middle point of a triple file")
    p.add_argument("--epsilon", type=_positive, required=True)
    p.add_argument("--norm", default="inf", choices=["inf", "l2"])
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("bench", help="time fixed-dim queries on random ensembles")
    p.add_argument("--trees", default="10,30,60")
    p.add_argument("--depths", default="8")
    p.add_argument("--features", default="22")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alpha", type=_positive, default=0.001)
    p.add_argument("--time-limit", type=_positive, default=300.0)
    p.add_argument("--dims-per-cell", type=int)
    p.add_argument("--threshold-bins", type=int, default=64)
    p.add_argument("--solver")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_bench)

    for p in sub.choices.values():
        p.add_argument("--json", action="store_true", help="JSON report")
        if not any(a.dest == "output" for a in p._actions):
            p.add_argument("--output", "-o")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ModelError, CnfError, ValueError, OSError, json.JSONDecodeError,
            BudgetExceeded) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (SolverError, EncodingSoundnessError, SmtError) as err:
        print(f"solver error: {err}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
