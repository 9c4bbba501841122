"""Glitch triples: verification, magnitude and shape classification.

Works for any callable mapping a point to a real number; ensembles are one
such callable.  Outputs are compared with absolute differences and inputs
with the absolute difference along the varying dimension.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Protocol, Sequence

from .ensemble import sigmoid


class Shape(str, Enum):
    CANYON = "canyon"
    HILL = "hill"


class EvaluableFunction(Protocol):
    def __call__(self, x: Sequence[float]) -> float: ...


OUTPUT_SPACES = ("margin", "probability")


def output_transform(output_space: str) -> Callable[[float], float]:
    if output_space == "margin":
        return float
    if output_space == "probability":
        return lambda v: float(sigmoid(v))
    raise ValueError(f"unknown output space {output_space!r}")


@dataclass(frozen=True)
class GlitchTriple:
    dim: int
    x_minus: tuple[float, ...]
    x: tuple[float, ...]
    x_plus: tuple[float, ...]
    f_minus: float
    f: float
    f_plus: float
    magnitude: float
    shape: Shape
    output_space: str = "margin"

    @property
    def points(self):
        return (self.x_minus, self.x, self.x_plus)

    @property
    def outputs(self):
        return (self.f_minus, self.f, self.f_plus)

    @property
    def gap(self) -> float:
        return self.x_plus[self.dim] - self.x_minus[self.dim]

    def to_json(self, feature_names: Sequence[str] | None = None) -> dict:
        doc = {
            "dim": self.dim,
            "points": [list(p) for p in self.points],
            "outputs": list(self.outputs),
            "magnitude": self.magnitude,
            "shape": self.shape.value,
            "output_space": self.output_space,
        }
        if feature_names is not None:
            doc["dim_name"] = feature_names[self.dim]
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "GlitchTriple":
        xm, x, xp = (tuple(float(v) for v in p) for p in doc["points"])
        fm, f, fp = (float(v) for v in doc["outputs"])
        return cls(int(doc["dim"]), xm, x, xp, fm, f, fp, float(doc["magnitude"]),
                   Shape(doc["shape"]), doc.get("output_space", "margin"))


@dataclass(frozen=True)
class Rejection:
    """Why a candidate triple is not an alpha-glitch.

    ``reason`` is one of ``"ordering"``, ``"monotone"`` or ``"magnitude"``.
    """

    reason: str
    detail: str = ""
    magnitude: float = 0.0

    def __bool__(self) -> bool:
        return False


def classify_shape(f_minus: float, f: float, f_plus: float) -> Shape | None:
    if f_minus > f and f < f_plus:
        return Shape.CANYON
    if f_minus < f and f > f_plus:
        return Shape.HILL
    return None


def magnitude(f_minus: float, f: float, f_plus: float, gap: float) -> float:
    """Largest alpha for which the outputs form an alpha-glitch over ``gap``.

    Zero when the three outputs do not oscillate.
    """
    if not gap > 0:
        raise ValueError(f"gap must be positive, got {gap}")
    if classify_shape(f_minus, f, f_plus) is None:
        return 0.0
    return min(abs(f - f_minus), abs(f - f_plus)) / gap


def lipschitz_magnitude_bound(L: float) -> float:
    """Upper bound on the magnitude of any glitch of an L-Lipschitz function."""
    if not L > 0:
        raise ValueError("Lipschitz constant must be positive")
    return L / 2.0


def varying_dimension(x_minus, x, x_plus) -> int | None:
    """The single dimension along which the points increase strictly, if any.

    Other coordinates must be bitwise equal.
    """
    if not len(x_minus) == len(x) == len(x_plus):
        return None
    diff = [j for j in range(len(x)) if not (x_minus[j] == x[j] == x_plus[j])]
    if len(diff) != 1:
        return None
    i = diff[0]
    if x_minus[i] < x[i] < x_plus[i]:
        return i
    return None


def evaluate_triple(f: EvaluableFunction | None, x_minus, x, x_plus,
                    outputs: Sequence[float] | None = None,
                    output_space: str = "margin") -> GlitchTriple | Rejection:
    """Build the glitch record for a candidate triple without any alpha test."""
    xm, xc, xp = (tuple(float(v) for v in p) for p in (x_minus, x, x_plus))
    i = varying_dimension(xm, xc, xp)
    if i is None:
        return Rejection("ordering", "points must differ in exactly one dimension "
                                     "and increase strictly along it")
    if outputs is None:
        if f is None:
            raise ValueError("either f or outputs is required")
        to_space = output_transform(output_space)
        fm, fc, fp = (to_space(f(p)) for p in (xm, xc, xp))
    else:
        fm, fc, fp = (float(v) for v in outputs)
    shape = classify_shape(fm, fc, fp)
    if shape is None:
        return Rejection("monotone", f"outputs {fm}, {fc}, {fp} do not oscillate")
    mag = magnitude(fm, fc, fp, xp[i] - xm[i])
    return GlitchTriple(i, xm, xc, xp, fm, fc, fp, mag, shape, output_space)


def check_triple(f: EvaluableFunction | None, x_minus, x, x_plus, alpha: float,
                 outputs: Sequence[float] | None = None,
                 output_space: str = "margin") -> GlitchTriple | Rejection:
    """Verify that ``(x_minus, x, x_plus)`` is an ``alpha``-glitch of ``f``.

    ``outputs`` may supply the three function values directly (``f`` is then
    not called and may be None).  In ``"probability"`` space the logistic
    transform is applied to ``f``'s outputs before the check; supplied
    outputs are taken as already being in the requested space.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    res = evaluate_triple(f, x_minus, x, x_plus, outputs, output_space)
    if isinstance(res, GlitchTriple) and not res.magnitude >= alpha:
        return Rejection("magnitude", f"magnitude {res.magnitude} is below alpha {alpha}",
                         res.magnitude)
    return res


def triple_magnitude(f: EvaluableFunction, x_minus, x, x_plus) -> float:
    """Magnitude of a candidate triple, zero if it is not a glitch at all."""
    i = varying_dimension(x_minus, x, x_plus)
    if i is None:
        return 0.0
    return magnitude(f(x_minus), f(x), f(x_plus), x_plus[i] - x_minus[i])
