"""Shared test configuration and the acceptance-criteria summary hook.

Acceptance tests record one (number, label, passed) entry each; the hook
prints a single PASS/FAIL line per criterion after the run so the verdicts
are visible even with captured stdout.
"""

_CRITERIA = []


def record_criterion(number: int, label: str, passed: bool):
    _CRITERIA.append((number, label, bool(passed)))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, label, passed in sorted(_CRITERIA):
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d} {verdict} - {label}")
