from importlib import resources

import pytest


@pytest.fixture(scope="session")
def fixture_dir():
    return resources.files("optbin") / "data"


@pytest.fixture(scope="session")
def fixture_paths(fixture_dir):
    return {
        "underlying": str(fixture_dir / "synthetic_underlying.csv"),
        "options": str(fixture_dir / "synthetic_options.csv"),
        "yields": str(fixture_dir / "synthetic_yields.csv"),
    }


ACCEPTANCE_LINES = {}


@pytest.fixture
def report_criterion():
    """Record one acceptance line; returns ``passed`` so tests can assert on it."""

    def record(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
