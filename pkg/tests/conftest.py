"""Shared test plumbing: the acceptance recorder.

Acceptance tests report through the ``criterion`` fixture so every run
prints one PASS/FAIL line per criterion in the terminal summary, visible
even when pytest captures stdout.
"""

import time

import pytest

_LINES = []


@pytest.fixture
def criterion():
    def record(number: int, name: str, budget: float, started: float,
               ok: bool, detail: str = ""):
        elapsed = time.monotonic() - started
        verdict = "PASS" if ok and elapsed < budget else "FAIL"
        line = (f"[criterion {number}] {name}: {verdict} "
                f"({elapsed:.2f}s, budget {budget:.0f}s)")
        _LINES.append(line)
        print(line)
        assert ok, detail or name
        assert elapsed < budget, f"over budget: {elapsed:.2f}s > {budget:.0f}s"
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _LINES:
        terminalreporter.section("acceptance")
        for line in _LINES:
            terminalreporter.write_line(line)
