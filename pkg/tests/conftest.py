"""Shared pytest wiring: one recorded verdict line per acceptance criterion."""

import re

import pytest

_LINES = {}


@pytest.hookimpl(tryfirst=True, hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    setattr(item, "rep_" + rep.when, rep)


@pytest.fixture
def criterion(request):
    """Collects a one-line measurement summary for an acceptance test.

    The line is emitted in the terminal summary with the test's verdict,
    so a red criterion still reports what was measured before it failed.
    """
    info = {"detail": "raised before any measurement was recorded"}

    def record(detail):
        info["detail"] = detail

    yield record
    m = re.match(r"test_criterion_(\d+)", request.node.name)
    if not m:
        return
    number = int(m.group(1))
    rep = getattr(request.node, "rep_call", None)
    status = "PASS" if rep is not None and rep.passed else "FAIL"
    _LINES[number] = f"[criterion {number}] {status} - {info['detail']}"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_LINES):
            terminalreporter.write_line(_LINES[number])
