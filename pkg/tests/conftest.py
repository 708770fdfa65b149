"""Shared fixtures: the acceptance-criteria PASS/FAIL recorder."""

import pytest

_CRITERION_LINES = []


@pytest.fixture(scope="session")
def criterion():
    """Record and assert one acceptance-criterion outcome.

    Usage: criterion("6", ok, "LN 0.99 vs CE 0.91 ...").  The line is echoed
    immediately and repeated in the terminal summary, and the assertion
    carries it as the failure message.
    """

    def record(label, ok, detail):
        line = f"CRITERION {label}: {'PASS' if ok else 'FAIL'} - {detail}"
        _CRITERION_LINES.append(line)
        print(line, flush=True)
        assert ok, line

    return record


def record_skip(label, detail):
    _CRITERION_LINES.append(f"CRITERION {label}: SKIP - {detail}")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERION_LINES:
            terminalreporter.write_line(line)
