"""Dataset-relative analyses: monotonicity sampling, violation classification,
and slice export for plotting."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .ensemble import Ensemble, sigmoid
from .oracle import breakpoints_in


@dataclass(frozen=True)
class LabeledDataset:
    points: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...] = ()

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1) if len(pts) else pts.reshape(0, 0)
        lab = np.asarray(self.labels, dtype=int)
        if len(pts) != len(lab):
            raise ValueError(f"{len(pts)} points but {len(lab)} labels")
        if not np.isin(lab, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", lab)

    def __len__(self) -> int:
        return len(self.labels)

    def check_bounds(self, bounds) -> None:
        lo = np.array([b[0] for b in bounds])
        hi = np.array([b[1] for b in bounds])
        bad = np.flatnonzero(((self.points < lo) | (self.points > hi)).any(axis=1))
        if bad.size:
            raise ValueError(f"row {int(bad[0])} lies outside the feature bounds")

    @classmethod
    def from_csv(cls, path, label_column: str = "label",
                 feature_names: Sequence[str] | None = None) -> "LabeledDataset":
        """Header row required; ``feature_names`` selects and orders columns
        (default: every column except the label)."""
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or label_column not in reader.fieldnames:
                raise ValueError(f"{path}: no {label_column!r} column")
            names = list(feature_names) if feature_names is not None else \
                [c for c in reader.fieldnames if c != label_column]
            missing = [c for c in names if c not in reader.fieldnames]
            if missing:
                raise ValueError(f"{path}: missing columns {missing}")
            pts, labels = [], []
            for lineno, row in enumerate(reader, 2):
                try:
                    pts.append([float(row[c]) for c in names])
                    labels.append(int(float(row[label_column])))
                except (TypeError, ValueError):
                    raise ValueError(f"{path}:{lineno}: non-numeric value") from None
        return cls(np.asarray(pts, dtype=float).reshape(len(pts), len(names)),
                   np.asarray(labels, dtype=int), tuple(names))


@dataclass(frozen=True)
class MonotonicityReport:
    samples: int
    non_monotonic: int
    probes: int
    non_monotonic_probes: int
    per_dimension: tuple[int, ...]
    seed: int
    step: float

    @property
    def percent(self) -> float:
        return 100.0 * self.non_monotonic / self.samples

    def to_json(self) -> dict:
        return {"samples": self.samples, "non_monotonic": self.non_monotonic,
                "percent": self.percent, "probes": self.probes,
                "non_monotonic_probes": self.non_monotonic_probes,
                "per_dimension": list(self.per_dimension), "seed": self.seed, "step": self.step}


def _oscillates(fm, f, fp) -> np.ndarray:
    return ((fm < f) & (f > fp)) | ((fm > f) & (f < fp))


def probe_point(m: Ensemble, x, step: float, bounds=None) -> list[int]:
    """Dimensions along which ``x - step, x, x + step`` (clipped to the bounds)
    give a rise-then-fall or fall-then-rise."""
    bounds = bounds or m.feature_space.bounds
    x = np.asarray(x, dtype=float)
    flagged = []
    for j, (lo, hi) in enumerate(bounds):
        a, b = max(lo, x[j] - step), min(hi, x[j] + step)
        if not a < x[j] < b:
            continue
        P = np.tile(x, (3, 1))
        P[:, j] = (a, x[j], b)
        v = m.evaluate_batch(P)
        if _oscillates(v[0], v[1], v[2]):
            flagged.append(j)
    return flagged


def monotonicity_sample(m: Ensemble, samples: int, seed: int, step: float,
                        bounds=None) -> MonotonicityReport:
    """Count uniformly sampled points that show a local oscillation in some
    dimension when probed at ``x - step, x, x + step``.

    Sample ``k`` draws from its own stream seeded by ``(seed, k)`` so results
    do not depend on batching.
    """
    if samples <= 0:
        raise ValueError("samples must be positive")
    if not step > 0:
        raise ValueError("step must be positive")
    bounds = bounds or m.feature_space.bounds
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    if (step > hi - lo).any():
        j = int(np.flatnonzero(step > hi - lo)[0])
        raise ValueError(f"step {step} is larger than the range of feature {j}")
    n = len(bounds)
    X = np.empty((samples, n))
    for k in range(samples):
        rng = np.random.default_rng(np.random.SeedSequence([seed, k]))
        X[k] = lo + (hi - lo) * rng.random(n)
    centre = m.evaluate_batch(X)
    hits = np.zeros(samples, dtype=bool)
    per_dim = []
    probes = 0
    for j in range(n):
        a = np.maximum(lo[j], X[:, j] - step)
        b = np.minimum(hi[j], X[:, j] + step)
        ok = (a < X[:, j]) & (X[:, j] < b)
        Xa, Xb = X.copy(), X.copy()
        Xa[:, j], Xb[:, j] = a, b
        osc = _oscillates(m.evaluate_batch(Xa), centre, m.evaluate_batch(Xb)) & ok
        probes += int(ok.sum())
        per_dim.append(int(osc.sum()))
        hits |= osc
    return MonotonicityReport(samples, int(hits.sum()), probes, sum(per_dim),
                              tuple(per_dim), int(seed), float(step))


ANTICIPATED = "anticipated"
UNANTICIPATED = "unanticipated"
INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class ViolationClassification:
    verdict: str
    neighbors: tuple[int, ...] = ()
    differing_pair: tuple[int, int] | None = None
    label_counts: tuple[int, int] = (0, 0)
    note: str = ""

    def to_json(self) -> dict:
        return {"verdict": self.verdict, "neighbors": list(self.neighbors),
                "differing_pair": list(self.differing_pair) if self.differing_pair else None,
                "label_counts": {"0": self.label_counts[0], "1": self.label_counts[1]},
                "note": self.note}


def classify_violation(ds: LabeledDataset, x, epsilon: float,
                       norm: str = "inf") -> ViolationClassification:
    """Compare the labels of training points within ``epsilon`` of ``x``.

    anticipated: two neighbours disagree; unanticipated: at least two
    neighbours, all with one label; inconclusive: fewer than two neighbours.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if norm not in ("inf", "l2"):
        raise ValueError(f"unknown norm {norm!r}")
    if len(ds) == 0:
        return ViolationClassification(INCONCLUSIVE, note="empty dataset")
    x = np.asarray(x, dtype=float)
    if ds.points.shape[1] != len(x):
        raise ValueError("point dimension does not match the dataset")
    diff = ds.points - x
    dist = np.abs(diff).max(axis=1) if norm == "inf" else np.sqrt((diff ** 2).sum(axis=1))
    idx = np.flatnonzero(dist <= epsilon)
    labels = ds.labels[idx]
    counts = (int((labels == 0).sum()), int((labels == 1).sum()))
    nb = tuple(int(i) for i in idx)
    if len(idx) < 2:
        note = ("one training point in the neighbourhood: no pair to compare, "
                "treated as inconclusive" if len(idx) == 1 else "no training points nearby")
        return ViolationClassification(INCONCLUSIVE, nb, None, counts, note)
    if counts[0] and counts[1]:
        i0 = int(idx[labels == 0][0])
        i1 = int(idx[labels == 1][0])
        return ViolationClassification(ANTICIPATED, nb, (min(i0, i1), max(i0, i1)), counts)
    return ViolationClassification(UNANTICIPATED, nb, None, counts)


def slice_positions(m: Ensemble, dim: int, resolution: int, bounds=None) -> list[float]:
    """Evenly spaced positions plus both sides of every split on ``dim``."""
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    lo, hi = bounds or m.feature_space.bounds[dim]
    pos = set(float(v) for v in np.linspace(lo, hi, resolution))
    for t in breakpoints_in(m.split_values(dim), lo, hi):
        pos.add(float(t))
        pos.add(min(hi, math.nextafter(t, math.inf)))
    return sorted(pos)


def export_slice_csv(m: Ensemble, base, dim: int, resolution: int = 200,
                     output_space: str = "margin", path=None, bounds=None
                     ) -> list[tuple[float, float]]:
    """Rows ``(x_dim, output)`` along a slice; written as ``x,output`` CSV to
    ``path`` when given (``"-"`` writes nothing and just returns the rows)."""
    if output_space not in ("margin", "probability"):
        raise ValueError(f"unknown output space {output_space!r}")
    base = np.asarray(base, dtype=float)
    xs = slice_positions(m, dim, resolution, bounds)
    X = np.tile(base, (len(xs), 1))
    X[:, dim] = xs
    out = m.evaluate_batch(X)
    if output_space == "probability":
        out = sigmoid(out)
    rows = [(float(a), float(b)) for a, b in zip(xs, out)]
    if path is not None and path != "-":
        Path(path).write_text(slice_csv_text(rows))
    return rows


def slice_csv_text(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "output"])
    for a, b in rows:
        w.writerow([repr(a), repr(b)])
    return buf.getvalue()
