import re

import pytest

ACCEPTANCE = {}


@pytest.fixture
def record():
    """Register one acceptance line; the summary prints at the end of the run."""

    def _record(key, title, passed, detail=""):
        ACCEPTANCE[key] = (title, bool(passed), detail)
        return passed

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(re.match(r"\d+", str(k)).group()), str(k))):
        title, passed, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{key:>3} {'PASS' if passed else 'FAIL'}  {title}  {detail}")
