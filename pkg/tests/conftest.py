import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from scipy.special import ndtri

from deepfrechet.metric_spaces import ProbGrid

settings.register_profile("dfr", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("dfr")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def normal_quantiles(mu, sigma, G=101):
    """Analytic quantile vector of N(mu, sigma^2) on the midpoint grid."""
    return mu + sigma * ndtri(ProbGrid(G).points)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
