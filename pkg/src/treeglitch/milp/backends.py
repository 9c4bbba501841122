"""External MILP solver processes: configuration, invocation, solution parsing."""
from __future__ import annotations

import importlib.util
import json
import math
import os
import platform
import shutil
import subprocess
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

FEASIBLE = "feasible"
INFEASIBLE = "infeasible"
TIMEOUT = "timeout"
SOLVER_ERROR = "solver_error"
STATUSES = (FEASIBLE, INFEASIBLE, TIMEOUT, SOLVER_ERROR)

PARSERS = ("cbc", "highs", "generic")
GRACE_SECONDS = 10.0


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverBackendConfig:
    """How to run one solver.

    ``args`` and ``time_args`` are templates; ``{exe}``, ``{lp}``, ``{sol}``,
    ``{time}`` and ``{python}`` are substituted.  ``time_args`` goes where
    ``args`` has a ``{time_args}`` entry (at the end otherwise) and is
    dropped when no time limit is given.
    """

    name: str
    executable: str
    args: tuple[str, ...]
    parser: str
    time_args: tuple[str, ...] = ()

    def __post_init__(self):
        if self.parser not in PARSERS:
            raise ValueError(f"unknown solution parser {self.parser!r}")

    def command(self, lp: str, sol: str, time_limit: float | None) -> list[str]:
        subs = {"exe": self.executable, "lp": lp, "sol": sol, "python": sys.executable,
                "time": "" if time_limit is None else f"{time_limit:g}"}
        targs = [a.format(**subs) for a in self.time_args] if time_limit is not None else []
        out = []
        for a in self.args:
            if a == "{time_args}":
                out += targs
                targs = []
            else:
                out.append(a.format(**subs))
        return out + targs


@dataclass
class SolveOutcome:
    status: str
    assignment: dict[str, float] | None = None
    objective_value: float | None = None
    wall_time: float = 0.0
    diagnostics: str = ""
    # a timeout may carry the incumbent the solver had when it stopped
    incumbent: dict[str, float] | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")
        if (self.assignment is not None) != (self.status == FEASIBLE):
            raise ValueError("assignment must be present exactly when feasible")


def _find_cbc() -> str | None:
    exe = shutil.which("cbc")
    if exe:
        return exe
    spec = importlib.util.find_spec("pulp")
    if spec and spec.submodule_search_locations:
        base = Path(list(spec.submodule_search_locations)[0]) / "solverdir" / "cbc"
        arch = {"x86_64": "i64", "amd64": "i64", "aarch64": "arm64",
                "arm64": "arm64"}.get(platform.machine().lower(), "")
        for cand in sorted(base.glob(f"*/{arch}/cbc")):
            if os.access(cand, os.X_OK):
                return str(cand)
    return None


def cbc_backend(executable: str | None = None) -> SolverBackendConfig:
    exe = executable or _find_cbc()
    if exe is None:
        raise SolverError("no cbc executable found on PATH")
    return SolverBackendConfig("cbc", exe, ("{exe}", "{lp}", "-ratioGap", "0", "-primalT", "1e-7",
                                            "-integerT", "1e-7", "{time_args}", "-solve",
                                            "-solu", "{sol}"),
                               "cbc", time_args=("-sec", "{time}"))


def highs_backend() -> SolverBackendConfig:
    if importlib.util.find_spec("highspy") is None:
        raise SolverError("highspy is not installed")
    return SolverBackendConfig("highs", sys.executable,
                               ("{python}", "-m", "treeglitch.milp.highs_runner", "{lp}", "{sol}"),
                               "highs", time_args=("--time-limit", "{time}"))


def backend_from_config(doc: dict) -> SolverBackendConfig:
    """Backend from a JSON-style mapping with keys name, executable, args,
    parser and optionally time_args."""
    try:
        return SolverBackendConfig(str(doc.get("name", "custom")), str(doc["executable"]),
                                   tuple(doc["args"]), str(doc.get("parser", "generic")),
                                   tuple(doc.get("time_args", ())))
    except KeyError as err:
        raise SolverError(f"solver configuration lacks {err.args[0]!r}") from None


def default_backend(name: str | None = None) -> SolverBackendConfig:
    """Backend selected by name, by the GLITCH_SOLVER variable, or HiGHS.

    GLITCH_SOLVER may hold ``highs``, ``cbc`` or the path of a JSON backend
    configuration.
    """
    choice = name or os.environ.get("GLITCH_SOLVER") or "highs"
    if choice == "highs":
        return highs_backend()
    if choice == "cbc":
        return cbc_backend()
    path = Path(choice)
    if path.is_file():
        try:
            return backend_from_config(json.loads(path.read_text()))
        except json.JSONDecodeError as err:
            raise SolverError(f"{path}: invalid JSON ({err})") from None
    raise SolverError(f"unknown solver {choice!r}; use highs, cbc or a JSON config file")


def _float(tok: str) -> float:
    v = float(tok)
    if math.isnan(v):
        raise ValueError("NaN in solution")
    return v


def parse_cbc_solution(text: str):
    """Returns (status, values, objective) from a CBC ``-solu`` file."""
    lines = text.splitlines()
    if not lines:
        raise SolverError("empty CBC solution file")
    head = lines[0].strip().lower()
    obj = None
    if "objective value" in head:
        try:
            obj = float(head.rsplit("objective value", 1)[1].split()[0])
        except (IndexError, ValueError):
            obj = None
    if head.startswith("optimal"):
        status = FEASIBLE
    elif head.startswith("stopped"):
        status = TIMEOUT
    elif "infeasible" in head or "unbounded" in head:
        return INFEASIBLE, None, None
    else:
        raise SolverError(f"unrecognised CBC status line {lines[0]!r}")
    values = {}
    for line in lines[1:]:
        parts = line.replace("**", " ").split()
        if len(parts) < 3:
            continue
        values[parts[1]] = _float(parts[2])
    if status == TIMEOUT and "no integer solution" in head:
        values = None
    return status, values, obj


def parse_highs_solution(text: str):
    """Returns (status, values, objective) from a HiGHS raw solution file."""
    lines = [l.rstrip() for l in text.splitlines()]
    try:
        k = lines.index("Model status")
    except ValueError:
        raise SolverError("HiGHS solution file lacks a model status") from None
    model_status = lines[k + 1].strip().lower()
    values, obj = None, None
    try:
        p = lines.index("# Primal solution values")
    except ValueError:
        p = None
    if p is not None and lines[p + 1].strip().lower() == "feasible":
        values = {}
        q = p + 2
        if lines[q].startswith("Objective"):
            obj = float(lines[q].split()[1])
            q += 1
        if lines[q].startswith("# Columns"):
            n = int(lines[q].split()[2])
            for line in lines[q + 1:q + 1 + n]:
                name, val = line.split()[:2]
                values[name] = _float(val)
    if model_status == "optimal":
        status = FEASIBLE
    elif model_status == "infeasible":
        return INFEASIBLE, None, None
    elif "time limit" in model_status or "iteration limit" in model_status or \
            "interrupt" in model_status or "solution limit" in model_status:
        status = TIMEOUT
    else:
        raise SolverError(f"HiGHS ended with model status {lines[k + 1]!r}")
    if status == FEASIBLE and values is None:
        raise SolverError("HiGHS reported optimal without a primal solution")
    return status, values, obj


def parse_generic_solution(text: str):
    """``status <word>`` on the first line, optional ``objective <v>``, then
    ``name value`` per line."""
    values: dict[str, float] = {}
    status, obj = None, None
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "status" and len(parts) == 2:
            status = parts[1].lower()
        elif parts[0] == "objective" and len(parts) == 2:
            obj = float(parts[1])
        elif len(parts) == 2:
            try:
                values[parts[0]] = _float(parts[1])
            except ValueError:
                raise SolverError(f"line {lineno}: bad value {parts[1]!r}") from None
        else:
            raise SolverError(f"line {lineno}: expected 'name value'")
    if status in ("optimal", "feasible"):
        return FEASIBLE, values, obj
    if status == "infeasible":
        return INFEASIBLE, None, None
    if status in ("timeout", "time_limit"):
        return TIMEOUT, values or None, obj
    raise SolverError(f"missing or unknown status {status!r}")


_PARSE = {"cbc": parse_cbc_solution, "highs": parse_highs_solution,
          "generic": parse_generic_solution}


def parse_solution(text: str, parser: str):
    return _PARSE[parser](text)


def run_backend(path, backend: SolverBackendConfig | None = None,
                time_limit: float | None = None, workdir=None,
                variables=None) -> SolveOutcome:
    """Run ``backend`` on the LP file at ``path`` and parse what it wrote.

    ``variables`` lists the declared variable names; those missing from a
    sparse solution file are reported as 0.
    """
    backend = backend or default_backend()
    if time_limit is not None and not time_limit > 0:
        raise ValueError("time limit must be positive")
    path = Path(path)
    sol = Path(workdir or path.parent) / (path.stem + ".sol")
    if sol.exists():
        sol.unlink()
    cmd = backend.command(str(path), str(sol), time_limit)
    start = time.monotonic()
    killed = False
    try:
        proc = subprocess.run(cmd, capture_output=True, text=True,
                              timeout=None if time_limit is None else time_limit + GRACE_SECONDS)
        out = (proc.stdout or "") + (proc.stderr or "")
        code = proc.returncode
    except subprocess.TimeoutExpired as err:
        killed = True
        out, code = str(err.stdout or "") + str(err.stderr or ""), None
    except OSError as err:
        return SolveOutcome(SOLVER_ERROR, wall_time=time.monotonic() - start,
                            diagnostics=f"cannot start {cmd[0]}: {err}")
    wall = time.monotonic() - start
    tail = out[-2000:]
    if not sol.exists():
        status = TIMEOUT if killed else SOLVER_ERROR
        return SolveOutcome(status, wall_time=wall,
                            diagnostics=f"no solution file (exit {code})\n{tail}")
    try:
        status, values, obj = parse_solution(sol.read_text(), backend.parser)
    except (SolverError, ValueError, IndexError) as err:
        if killed:
            return SolveOutcome(TIMEOUT, wall_time=wall, diagnostics=str(err))
        return SolveOutcome(SOLVER_ERROR, wall_time=wall,
                            diagnostics=f"{err} (exit {code})\n{tail}")
    if code not in (0, None) and status != INFEASIBLE and backend.parser != "cbc":
        return SolveOutcome(SOLVER_ERROR, wall_time=wall,
                            diagnostics=f"solver exited with {code}\n{tail}")
    if values is not None and variables is not None:
        values = {v: values.get(v, 0.0) for v in variables}
    if killed:
        status = TIMEOUT
    if status == FEASIBLE:
        return SolveOutcome(FEASIBLE, values, obj, wall, tail)
    if status == TIMEOUT:
        return SolveOutcome(TIMEOUT, None, obj, wall, tail, incumbent=values)
    return SolveOutcome(INFEASIBLE, wall_time=wall, diagnostics=tail)
