from fractions import Fraction
from pathlib import Path

import pytest
import ptleak
from hypothesis import HealthCheck, settings

from ptleak.lang import parse_program
from ptleak.semantics import TimedTree

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large]
)
settings.load_profile("default")

PROGRAMS = Path(ptleak.__file__).parent / "programs"

# acceptance criterion -> list of (ok, message); filled by test_acceptance.py
ACCEPTANCE: dict[int, list[tuple[bool, str]]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        entries = ACCEPTANCE[n]
        ok = all(flag for flag, _ in entries)
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}")
        for flag, msg in entries:
            terminalreporter.write_line(f"    [{'ok' if flag else '!!'}] {msg}")


def load_program(name: str):
    text = (PROGRAMS / f"{name}.pw").read_text()
    return parse_program(text)


@pytest.fixture(scope="session")
def agat():
    return load_program("agat")


@pytest.fixture(scope="session")
def pagat():
    return load_program("pagat")


@pytest.fixture(scope="session")
def fagat():
    return load_program("fagat")


def _chain(n, lab="x"):
    s = lab
    for _ in range(n):
        s = (lab, [(1, 1, s)])
    return s


HALF = Fraction(1, 2)
T_SPECS = {
    "T1": _chain(3),
    "T2": ("x", [(HALF, 1, _chain(1)), (HALF, 1, _chain(2))]),
    "T3": ("x", [(1, 1, ("x", [(HALF, 1, "x"), (HALF, 1, _chain(1))]))]),
    "T4": ("x", [(1, 1, ("x", [(1, 1, ("x", [(HALF, 1, "x"), (HALF, 1, "x")]))]))]),
}


@pytest.fixture(scope="session")
def small_trees():
    """The four reference trees with unit durations and a single label."""
    return {name: TimedTree.from_nested(spec) for name, spec in T_SPECS.items()}


@pytest.fixture(scope="session")
def joint_example():
    """Two systems with equal time and label marginals but different joint behaviour."""
    q = Fraction(1, 4)
    a = TimedTree.from_nested(("b", [(q, 1, "o"), (q, 2, "o"), (q, 1, "b"), (q, 2, "b")]))
    b = TimedTree.from_nested(("b", [(q, 2, "b"), (q, 2, "b"), (q, 1, "o"), (q, 1, "o")]))
    return a, b
