import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("hgm", deadline=None, max_examples=50)
settings.load_profile("hgm")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE = []


@pytest.fixture
def acceptance(request):
    """Record and print one pass/fail line per acceptance criterion."""

    def record(number, title, passed, detail, elapsed, budget):
        in_time = elapsed < budget
        ok = bool(passed and in_time)
        line = (f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail} "
                f"[{elapsed:.2f} s, budget {budget:g} s]")
        _ACCEPTANCE.append(line)
        print(line)
        assert passed, line
        assert in_time, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
