import pytest

# (criterion number, "PASS"/"FAIL", detail) lines from tests/test_acceptance.py
ACCEPTANCE_LINES: list[tuple[int, str, str]] = []


@pytest.fixture
def report(request):
    """Record one acceptance line; the terminal summary lists them in order."""
    def _report(number: int, passed: bool, detail: str) -> None:
        line = (number, "PASS" if passed else "FAIL", detail)
        ACCEPTANCE_LINES.append(line)
        capman = request.config.pluginmanager.getplugin("capturemanager")
        with capman.global_and_fixture_disabled():
            print(f"\n  criterion {number:2d}: {line[1]}  {detail}")
    return _report


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number, status, detail in sorted(ACCEPTANCE_LINES, key=lambda x: x[0]):
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {detail}")
