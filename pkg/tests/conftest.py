import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_spd(rng, d, jitter=0.5):
    M = rng.standard_normal((d, d))
    return M @ M.T / d + jitter * np.eye(d)


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance verdict lines, one per criterion, after the run."""
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(results):
        terminalreporter.write_line(results[k])
