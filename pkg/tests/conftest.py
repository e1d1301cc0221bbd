import pytest

from spectral_complement import build_graph

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def record():
    """Record one acceptance line, then return ``ok`` for asserting."""

    def _record(criterion, ok, detail):
        status = "PASS" if ok else "FAIL"
        if ok is None:
            status = "SKIP"
        ACCEPTANCE_LINES.append(f"[{status}] {criterion}: {detail}")
        return ok

    return _record


@pytest.fixture
def k2():
    return build_graph([(0, 1)], 2)


@pytest.fixture
def p3():
    return build_graph([(0, 1), (1, 2)], 3)


@pytest.fixture
def k3():
    return build_graph([(0, 1), (1, 2), (0, 2)], 3)
