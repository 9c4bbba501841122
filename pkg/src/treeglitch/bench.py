"""Timing grid for fixed-dimension MILP queries on random ensembles."""
from __future__ import annotations

import csv
import io
import itertools
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .generate import random_ensemble
from .milp.backends import SolverBackendConfig, SolverError, default_backend
from .milp.encode import EncodingParams
from .milp.search import EncodingSoundnessError, solve_decision

CSV_COLUMNS = ("trees", "depth", "features", "queries", "found", "none", "timeouts",
               "errors", "mean_seconds")


@dataclass(frozen=True)
class BenchRow:
    trees: int
    depth: int
    features: int
    queries: int
    found: int
    none: int
    timeouts: int
    errors: int
    mean_seconds: float

    def as_tuple(self):
        return tuple(getattr(self, c) for c in CSV_COLUMNS)


def _query(args):
    m, dim, alpha, backend, time_limit = args
    start = time.monotonic()
    try:
        res = solve_decision(m, EncodingParams(alpha=alpha), dim, backend, time_limit)
        status = res.status
    except (SolverError, EncodingSoundnessError):
        status = "error"
    return status, time.monotonic() - start


def bench_cell(trees: int, depth: int, features: int, seed: int, alpha: float = 0.001,
               time_limit: float = 300.0, backend: SolverBackendConfig | None = None,
               dims_per_cell: int | None = None, threshold_bins: int | None = 64,
               jobs: int = 1) -> BenchRow:
    """One grid cell: a random ensemble and fixed-dim queries over its
    dimensions (all of them, or ``dims_per_cell`` drawn without replacement)."""
    backend = backend or default_backend()
    rng = np.random.default_rng(np.random.SeedSequence([seed, trees, depth, features]))
    m = random_ensemble(rng, trees, depth, features, threshold_bins=threshold_bins)
    dims = list(range(features))
    if dims_per_cell is not None and dims_per_cell < features:
        dims = sorted(int(d) for d in rng.choice(features, dims_per_cell, replace=False))
    tasks = [(m, d, alpha, backend, time_limit) for d in dims]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_query, tasks))
    else:
        results = [_query(t) for t in tasks]
    statuses = [s for s, _ in results]
    secs = [t for _, t in results]
    return BenchRow(trees, depth, features, len(results), statuses.count("found"),
                    statuses.count("none"), statuses.count("timeout"),
                    statuses.count("error"), float(np.mean(secs)) if secs else 0.0)


def run_bench(tree_counts, depths, features, seed: int = 0, **kw) -> list[BenchRow]:
    if not tree_counts or not depths or not features:
        raise ValueError("the grid is empty")
    return [bench_cell(t, d, f, seed, **kw)
            for t, d, f in itertools.product(tree_counts, depths, features)]


def bench_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        t = r.as_tuple()
        w.writerow(list(t[:-1]) + [f"{t[-1]:.6f}"])
    return buf.getvalue()
