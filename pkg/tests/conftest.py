import time

import pytest

SUITE_BUDGET_S = 600.0
_lines = {}
_start = [0.0]


def pytest_sessionstart(session):
    _start[0] = time.perf_counter()


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion."""

    def record(number, passed, detail):
        _lines[number] = f"ACCEPTANCE #{number} {'PASS' if passed else 'FAIL'}: {detail}"
        print(_lines[number])
        return passed

    return record


def pytest_sessionfinish(session, exitstatus):
    if not _lines:
        return
    elapsed = time.perf_counter() - _start[0]
    failed = session.testsfailed
    ok = failed == 0 and elapsed <= SUITE_BUDGET_S
    _lines[9] = (f"ACCEPTANCE #9 {'PASS' if ok else 'FAIL'}: {session.testscollected} tests, "
                 f"{failed} failed, {elapsed:.1f} s (budget {SUITE_BUDGET_S:.0f} s)")
    if not ok and session.exitstatus == 0:
        session.exitstatus = 1


def pytest_terminal_summary(terminalreporter):
    if not _lines:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_lines):
        terminalreporter.write_line(_lines[k])
