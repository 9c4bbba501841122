"""In-memory mixed-integer linear program."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

BINARY = "binary"
CONTINUOUS = "continuous"
SENSES = ("<=", ">=", "=")


class InstanceError(ValueError):
    pass


@dataclass(frozen=True)
class Variable:
    name: str
    kind: str = CONTINUOUS
    lower: float = 0.0
    upper: float = math.inf


@dataclass(frozen=True)
class Constraint:
    name: str
    terms: tuple[tuple[float, str], ...]
    sense: str
    rhs: float


@dataclass
class MilpInstance:
    """Variables, linear constraints and a linear objective to maximize.

    Insertion order is preserved so that emitted files are deterministic.
    """

    variables: dict[str, Variable] = field(default_factory=dict)
    constraints: list[Constraint] = field(default_factory=list)
    objective: dict[str, float] = field(default_factory=dict)
    sense: str = "max"
    objective_offset: float = 0.0
    _cnames: set = field(default_factory=set, repr=False)

    def add_var(self, name: str, kind: str = CONTINUOUS, lower: float = 0.0,
                upper: float = math.inf) -> str:
        if name in self.variables:
            raise InstanceError(f"duplicate variable {name!r}")
        if kind not in (BINARY, CONTINUOUS):
            raise InstanceError(f"unknown variable kind {kind!r}")
        if kind == BINARY:
            lower, upper = max(0.0, lower), min(1.0, upper)
        if lower > upper:
            raise InstanceError(f"variable {name!r} has empty domain [{lower}, {upper}]")
        self.variables[name] = Variable(name, kind, float(lower), float(upper))
        return name

    def add_constraint(self, name: str, terms, sense: str, rhs: float) -> None:
        if sense not in SENSES:
            raise InstanceError(f"unknown sense {sense!r}")
        if name in self._cnames:
            raise InstanceError(f"duplicate constraint {name!r}")
        merged: dict[str, float] = {}
        for coef, var in terms:
            if var not in self.variables:
                raise InstanceError(f"constraint {name!r} references undeclared {var!r}")
            merged[var] = merged.get(var, 0.0) + float(coef)
        tt = tuple((c, v) for v, c in merged.items() if c != 0.0)
        self._cnames.add(name)
        self.constraints.append(Constraint(name, tt, sense, float(rhs)))

    def set_objective(self, terms) -> None:
        obj: dict[str, float] = {}
        for coef, var in terms:
            if var not in self.variables:
                raise InstanceError(f"objective references undeclared {var!r}")
            obj[var] = obj.get(var, 0.0) + float(coef)
        self.objective = obj

    @property
    def binaries(self) -> list[str]:
        return [v.name for v in self.variables.values() if v.kind == BINARY]

    def check_assignment(self, values: dict[str, float], tol: float = 1e-6) -> list[str]:
        """Names of violated constraints and bounds (for diagnostics and tests)."""
        bad = []
        for v in self.variables.values():
            x = values.get(v.name, 0.0)
            if x < v.lower - tol or x > v.upper + tol:
                bad.append(v.name)
            elif v.kind == BINARY and min(abs(x), abs(x - 1)) > tol:
                bad.append(v.name)
        for c in self.constraints:
            lhs = sum(coef * values.get(var, 0.0) for coef, var in c.terms)
            scale = tol * max(1.0, abs(c.rhs))
            if ((c.sense == "<=" and lhs > c.rhs + scale)
                    or (c.sense == ">=" and lhs < c.rhs - scale)
                    or (c.sense == "=" and abs(lhs - c.rhs) > scale)):
                bad.append(c.name)
        return bad
