"""Run HiGHS on an LP file and write its solution file.

Usage: python -m treeglitch.milp.highs_runner MODEL.lp SOLUTION.sol [--time-limit S]
"""
from __future__ import annotations

import argparse
import sys
import time


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="highs_runner")
    ap.add_argument("model")
    ap.add_argument("solution")
    ap.add_argument("--time-limit", type=float, default=None)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args(argv)

    import highspy

    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("threads", args.threads)
    h.setOptionValue("mip_rel_gap", 0.0)
    h.setOptionValue("mip_abs_gap", 0.0)
    h.setOptionValue("mip_feasibility_tolerance", 1e-7)
    h.setOptionValue("primal_feasibility_tolerance", 1e-7)
    if args.time_limit is not None:
        h.setOptionValue("time_limit", float(args.time_limit))
    if h.readModel(args.model) != highspy.HighsStatus.kOk:
        print(f"cannot read {args.model}", file=sys.stderr)
        return 2
    start = time.monotonic()
    h.run()
    left = None if args.time_limit is None else args.time_limit - (time.monotonic() - start)
    if h.getModelStatus() == highspy.HighsModelStatus.kSolveError and (left is None or left > 0):
        # presolve occasionally breaks down numerically on big-M rows; retry without it
        h.setOptionValue("presolve", "off")
        if left is not None:
            h.setOptionValue("time_limit", left)
        h.clearSolver()
        h.run()
    h.writeSolution(args.solution, 0)
    return 0


if __name__ == "__main__":
    sys.exit(main())
