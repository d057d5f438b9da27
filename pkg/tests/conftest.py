import os
import sys
import time

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile(
    "default", max_examples=60, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

# worker threads for the large runs; results do not depend on it
THREADS = min(8, os.cpu_count() or 1)
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

from prodlimits.law import law_rank_one, law_symmetric, law_two_atoms  # noqa: E402


@pytest.fixture(scope="session")
def sym_law():
    return law_symmetric()


@pytest.fixture(scope="session")
def ab_law():
    return law_two_atoms()


@pytest.fixture(scope="session")
def rank_one():
    return law_rank_one()


@pytest.fixture(scope="session")
def ab_cumulants(ab_law):
    from prodlimits.spectral import cumulants_from_pressure, pressure_curve

    return cumulants_from_pressure(pressure_curve(ab_law, refine_check=False))


@pytest.fixture(scope="session")
def rank_one_cumulants(rank_one):
    from prodlimits.spectral import cumulants_from_pressure, pressure_curve

    return cumulants_from_pressure(pressure_curve(rank_one, refine_check=False))


@pytest.fixture(scope="session")
def ab_berry_esseen(ab_law, ab_cumulants):
    """Kolmogorov gaps on the two-atom law, 10^6 replicates per rung (about a minute)."""
    from prodlimits.stats import berry_esseen_rate_fit

    start = time.perf_counter()
    rep = berry_esseen_rate_fit(ab_law, ns=(64, 256, 1024), replicates=1_000_000, seed=2024,
                                cumulants=ab_cumulants, threads=THREADS)
    rep.elapsed = time.perf_counter() - start
    return rep


@pytest.fixture(scope="session")
def rank_one_plain_mdr(rank_one, rank_one_cumulants):
    """Plain Monte Carlo tail ratios on the rank-one law, n = 400, 10^6 replicates."""
    from prodlimits.stats import moderate_deviation_ratio

    return moderate_deviation_ratio(rank_one, 400, [0.0, 1.0], rank_one_cumulants,
                                    method="plain", replicates=1_000_000, seed=2024,
                                    threads=THREADS)
