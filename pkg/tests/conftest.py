import pytest

ACCEPTANCE = {}


@pytest.fixture
def record():
    """Record a PASS/FAIL line for an acceptance criterion."""

    def _record(number, title, ok, detail=""):
        ACCEPTANCE[number] = (title, bool(ok), detail)
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[number]
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {title}"
        terminalreporter.write_line(line + (f"  ({detail})" if detail else ""))
