from __future__ import annotations

import _report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    # Acceptance results get a dedicated section so they survive output
    # capture and show up in piped CI logs.
    if _report.lines:
        terminalreporter.section("acceptance report")
        for line in _report.lines:
            terminalreporter.write_line(line)
