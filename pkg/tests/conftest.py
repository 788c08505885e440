"""Shared test plumbing: the acceptance-criteria result banner.

Acceptance tests record one line per criterion through the ``criterion``
fixture; the lines are printed in a terminal-summary section so they are
visible in normal (captured) pytest runs, pass or fail.
"""

import pytest

_RESULTS: list[tuple[int, str, bool, str]] = []


@pytest.fixture
def criterion():
    def record(number: int, name: str, passed: bool, detail: str = "") -> bool:
        _RESULTS.append((number, name, bool(passed), detail))
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for number, name, passed, detail in sorted(_RESULTS):
        line = f"[criterion {number:2d}] {'PASS' if passed else 'FAIL'} - {name}"
        if detail:
            line += f" ({detail})"
        terminalreporter.write_line(line)
