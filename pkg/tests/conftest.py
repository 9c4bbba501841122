import shutil

import pytest

from treeglitch.generate import toy_canyon
from treeglitch.milp.backends import SolverError, cbc_backend, highs_backend


@pytest.fixture
def toy():
    return toy_canyon()


def _backends():
    out = []
    for make in (highs_backend, cbc_backend):
        try:
            out.append(make())
        except SolverError:
            pass
    return out


BACKENDS = _backends()
HAVE_Z3 = shutil.which("z3") is not None

needs_solver = pytest.mark.skipif(not BACKENDS, reason="no MILP solver available")
needs_z3 = pytest.mark.skipif(not HAVE_Z3, reason="z3 not on PATH")


@pytest.fixture(params=[b.name for b in BACKENDS] or ["none"])
def backend(request):
    for b in BACKENDS:
        if b.name == request.param:
            return b
    pytest.skip("no MILP solver available")


ACCEPTANCE_LINES: dict[int, str] = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES[criterion] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
