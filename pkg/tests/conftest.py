import os
import time
from contextlib import contextmanager

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("thorough", deadline=None, max_examples=500)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_ACCEPTANCE = []


class _Criterion:
    def __init__(self):
        self.failures = []
        self.details = []
        # time spent in shared fixtures, charged to this criterion
        self.extra_seconds = 0.0

    def check(self, ok, message):
        if not ok:
            self.failures.append(message)
        return ok

    def note(self, message):
        self.details.append(message)


@pytest.fixture(scope="session")
def criterion():
    """Context manager that times a block, collects checks and logs one PASS/FAIL line."""

    @contextmanager
    def run(number, title, limit=None, extra_seconds=0.0):
        c = _Criterion()
        start = time.perf_counter()
        try:
            yield c
        except Exception as exc:
            c.failures.append(f"{type(exc).__name__}: {exc}")
        seconds = time.perf_counter() - start + c.extra_seconds + extra_seconds
        if limit is not None:
            c.check(seconds < limit, f"runtime {seconds:.1f}s over the {limit:.0f}s limit")
        status = "FAIL" if c.failures else "PASS"
        line = f"criterion {number:>2} {status} ({seconds:.1f}s) {title}"
        if c.details:
            line += " | " + "; ".join(c.details)
        if c.failures:
            line += " | failed: " + "; ".join(c.failures)
        _ACCEPTANCE.append((number, line))
        print("\n" + line)
        assert not c.failures, line

    return run


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
