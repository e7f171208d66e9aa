"""Package exit criteria.  Each test prints one PASS/FAIL line (visible with -s or in the summary)."""

import pytest

from georay.acceptance import CRITERIA

LINES = []


@pytest.fixture(scope="module", autouse=True)
def summary(request):
    yield
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")
    if reporter is not None:
        reporter.write_sep("-", "acceptance")
        for line in LINES:
            reporter.write_line(line)


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number):
    c = CRITERIA[number]()
    LINES.append(c.line())
    print(c.line())
    assert c.passed, c.details
