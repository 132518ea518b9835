"""Prints one pass/fail line per acceptance criterion at the end of the run."""

import pytest

_criteria = {}
_outcomes = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, text): acceptance criterion checked by the test")


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            _criteria[item.nodeid] = m.args


def pytest_runtest_logreport(report):
    if report.nodeid not in _criteria:
        return
    if report.when == "call" or report.failed:
        _outcomes.setdefault(report.nodeid, "PASS" if report.passed else "FAIL")
        if report.failed:
            _outcomes[report.nodeid] = "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid, (n, text) in sorted(_criteria.items(), key=lambda kv: kv[1][0]):
        if nodeid in _outcomes:
            terminalreporter.write_line(f"criterion {n:2d} {_outcomes[nodeid]}: {text}")


@pytest.fixture
def detail(request, capsys):
    """Print a measured-value line for the current criterion, visible with -s or on failure."""
    m = request.node.get_closest_marker("criterion")

    def emit(text):
        print(f"criterion {m.args[0]}: {text}")

    return emit
