import numpy as np
import pytest
from hypothesis import settings

from bspdetect.channel import draw_instance
from bspdetect.modem import build_constellation

settings.register_profile("default", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("default")


def random_instance(rng, n_r, n_t, M, sigma2):
    """A channel use drawn with the library's own generator."""
    return draw_instance(rng, n_r, n_t, build_constellation(M), sigma2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_REPORT = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_report(request):
    """Collects one status line per acceptance criterion for the terminal summary."""
    lines = request.config.stash.setdefault(_REPORT, [])

    def report(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(line)
        lines.append((number, line))
        return passed

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_REPORT, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
