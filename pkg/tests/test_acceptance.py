"""Acceptance matrix at the full default budget.

Every criterion runs once per session; each prints a PASS/FAIL line and is
then asserted as its own test.  Runnable directly as a script as well.
"""

import sys

import pytest

from cooprelay.acceptance import CHECKS, Budget, run_acceptance


@pytest.fixture(scope="module")
def report(request):
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")

    def echo(line):
        if reporter is not None:
            reporter.write_line(line)
        else:
            print(line)

    return {r.name: r for r in run_acceptance(Budget(), echo=echo)}


@pytest.mark.parametrize("name", list(CHECKS), ids=[f"{n}-{name}" for name, (n, _) in CHECKS.items()])
def test_criterion(report, name):
    result = report[name]
    assert result.passed, result.line()


if __name__ == "__main__":
    results = run_acceptance(Budget())
    sys.exit(0 if all(r.passed for r in results) else 1)
