import pytest

# Filled by tests/test_acceptance.py; printed once at the end of the session.
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])


@pytest.fixture
def report():
    """Record one PASS/FAIL line for a criterion, then fail the test if it did not hold."""

    def _report(n: int, ok: bool, detail: str) -> None:
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}"
        ACCEPTANCE[n] = line
        print(line)
        assert ok, line

    return _report
