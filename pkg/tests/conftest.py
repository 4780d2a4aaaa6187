"""Shared pytest hooks."""

import sys


def pytest_terminal_summary(terminalreporter):
    # repeat the acceptance lines at the end of the run, in criterion order
    results = {}
    for name, mod in list(sys.modules.items()):
        if name.rsplit(".", 1)[-1] == "test_acceptance":
            results.update(getattr(mod, "RESULTS", {}))
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
