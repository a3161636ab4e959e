"""Shared fixtures and the acceptance-summary hook.

Acceptance tests append one line per criterion to ACCEPTANCE_LINES; the
terminal-summary hook below re-prints them at the end of the run so the
pass/fail status of every criterion is visible in plain `pytest` output.
"""

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
