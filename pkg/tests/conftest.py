import pytest

_RESULTS = []


@pytest.fixture
def report(request):
    """``report(n, ok, detail)`` prints one PASS/FAIL line for acceptance criterion ``n``."""
    term = request.config.pluginmanager.get_plugin("terminalreporter")

    def _report(number, ok, detail):
        line = f"CRITERION {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _RESULTS.append(line)
        if term is not None:
            term.write_line("")
            term.write_line(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if _RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_RESULTS):
            terminalreporter.write_line(line)
