"""Search problem descriptions shared by the oracle, MILP and SMT routes."""
from __future__ import annotations

from dataclasses import dataclass, field

from .ensemble import Ensemble

VARIANTS = ("fixed_dim", "any_dim", "max")


@dataclass(frozen=True)
class SearchProblem:
    """Which glitch question to answer.

    ``fixed_dim`` and ``any_dim`` are the decision questions (a glitch with
    magnitude above ``alpha`` in dimension ``dim`` / in some dimension);
    ``max`` asks for the largest magnitude, optionally restricted to ``dim``.
    ``region`` maps feature indices to ``(lo, hi)`` overrides of the feature
    bounds.  ``eps_sep`` and ``witness_delta`` are fractions of each
    feature's range.
    """

    variant: str = "max"
    alpha: float | None = None
    dim: int | None = None
    region: dict[int, tuple[float, float]] = field(default_factory=dict)
    eps_sep: float = 1e-6
    witness_delta: float = 1e-6
    output_space: str = "margin"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.variant != "max" and not (self.alpha is not None and self.alpha > 0):
            raise ValueError("decision variants need alpha > 0")
        if self.variant == "fixed_dim" and self.dim is None:
            raise ValueError("fixed_dim needs a dimension")
        if self.variant == "any_dim" and self.dim is not None:
            raise ValueError("any_dim does not take a dimension")
        if not self.eps_sep > 0 or not self.witness_delta > 0:
            raise ValueError("eps_sep and witness_delta must be positive")
        if self.output_space not in ("margin", "probability"):
            raise ValueError(f"unknown output space {self.output_space!r}")

    def dims(self, m: Ensemble) -> list[int]:
        if self.dim is not None:
            return [self.dim]
        return list(range(m.n_features))

    def bounds(self, m: Ensemble) -> list[tuple[float, float]]:
        """Effective per-feature search box (feature bounds with region overrides)."""
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

    def decide(self, sup_magnitude: float) -> bool | None:
        if self.variant == "max":
            return None
        return sup_magnitude > self.alpha
