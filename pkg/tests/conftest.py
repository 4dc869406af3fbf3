"""Suite-wide configuration: hypothesis profile and the acceptance report.

The acceptance tests record one line per criterion (measured value plus
PASS/FAIL); pytest captures stdout, so the lines are replayed in a summary
section after the run where they are visible regardless of outcome.
"""

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=25,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance_report(request):
    """Returns check(name, detail, ok): records the line, then asserts."""
    config = request.config
    lines = getattr(config, "_acceptance_lines", None)
    if lines is None:
        lines = []
        config._acceptance_lines = lines

    def check(name, detail, ok):
        line = f"[acceptance] {name}: {detail} -> {'PASS' if ok else 'FAIL'}"
        lines.append(line)
        print(line)
        assert ok, line

    return check
