import sys

import pytest


@pytest.hookimpl(tryfirst=True, hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    setattr(item, "rep_" + report.when, report)


@pytest.fixture(autouse=True)
def _criterion_line(request):
    """Print one PASS/FAIL line per @pytest.mark.criterion test, past
    output capture, so the log doubles as an acceptance checklist."""
    yield
    marker = request.node.get_closest_marker("criterion")
    if marker is None:
        return
    report = getattr(request.node, "rep_call", None)
    status = "PASS" if report is not None and report.passed else "FAIL"
    line = f"[acceptance] {marker.args[0]}: {status}"
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")
    if reporter is not None:
        reporter.write_line(line)
    else:
        print(line, file=sys.stderr)
