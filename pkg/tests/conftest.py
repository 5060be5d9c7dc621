import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from isext.smt import SolverSession, SolverUnavailable  # noqa: E402


@pytest.fixture(scope="session")
def z3():
    try:
        return SolverSession.from_env()
    except SolverUnavailable:
        pytest.skip("no SMT solver available")


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
