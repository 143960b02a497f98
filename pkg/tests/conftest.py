"""Shared pytest plumbing.

The acceptance tests register one verdict line each; printing them again in
the terminal summary keeps the per-criterion outcome visible even when pytest
captures stdout."""

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
