"""Collects the acceptance verdicts and prints them after the run."""

import pytest

_VERDICTS = []


@pytest.fixture(scope="session")
def verdict():
    def record(criterion: int, passed: bool, detail: str):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {criterion:>2}: {detail}"
        _VERDICTS.append((criterion, line))
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_VERDICTS):
            terminalreporter.write_line(line)
