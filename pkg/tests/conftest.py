import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20241016)


CRITERIA = []


@pytest.fixture
def criterion(capsys):
    """Record one pass/fail line per acceptance criterion, then assert it."""
    def report(number, title, ok, detail):
        line = f"CRITERION {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        CRITERIA.append((number, line))
        with capsys.disabled():
            print("\n" + line)
        assert ok, line
    return report


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(CRITERIA):
            terminalreporter.write_line(line)
