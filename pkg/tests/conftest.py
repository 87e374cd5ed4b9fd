import os
import sys

sys.path.insert(0, os.path.dirname(__file__))


_VERDICTS = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance" in report.nodeid:
        lines = [l for l in report.capstdout.splitlines() if l.startswith("ACCEPTANCE")]
        if not lines and report.failed:
            lines = [f"ACCEPTANCE ?? FAIL: {report.nodeid} raised before its verdict"]
        _VERDICTS.extend(lines)


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS):
            terminalreporter.write_line(line)
