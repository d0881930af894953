import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rrbeam.scenario import Scenario

settings.register_profile(
    "default",
    max_examples=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


def random_spd(rng, n=2, cond=50.0):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    lam = np.exp(rng.uniform(0.0, np.log(cond), n))
    return (q * lam) @ q.T


def random_herm(rng, n, psd=False):
    g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return g @ g.conj().T if psd else (g + g.conj().T) / 2.0


def three_bs_scenario(seed: int, n_antennas: int = 8) -> Scenario:
    """Random 3-BS layout around the user at [75, 75], all points >= 15 m apart."""
    rng = np.random.default_rng([7, seed])
    user = np.array([75.0, 75.0])
    while True:
        bs = rng.uniform(0.0, 150.0, (3, 2))
        pts = np.vstack([bs, user])
        d = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
        if np.min(d[np.triu_indices(4, 1)]) > 15.0:
            return Scenario(bs_positions=bs, n_antennas=n_antennas)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def small_scenario():
    return Scenario(n_antennas=8)


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
