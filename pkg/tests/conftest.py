import os

import pytest
from hypothesis import HealthCheck, settings

from sfsim import available_backends
from sfsim.workload import CPU, IO, FunctionRequest

settings.register_profile(
    "default", max_examples=60, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

BACKENDS = available_backends()


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


def req(i, submit, *segments, group=1):
    """FunctionRequest from (kind, length) pairs or bare ints (CPU)."""
    segs = tuple((CPU, s) if isinstance(s, int) else s for s in segments)
    return FunctionRequest(i, submit, segs, group)


def io(n):
    return (IO, n)


# the acceptance module registers one line per criterion here
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
