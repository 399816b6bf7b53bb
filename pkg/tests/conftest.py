import numpy as np
import pytest

from hsfl.channel import draw_round_channels, make_scenario
from hsfl.delay import RoundEnv
from hsfl.model_profile import build_paper_cnn_profile

CRITERIA: list[str] = []


def make_env(seed, num_devices, d_range=(800, 2500), fading=True, profile=None):
    """Random cell with the default radio and compute constants; dataset sizes uniform over ``d_range``."""
    rng = np.random.default_rng(seed)
    sizes = rng.integers(d_range[0], d_range[1], size=num_devices)
    scenario = make_scenario(sizes, rng)
    return RoundEnv(scenario, draw_round_channels(scenario, rng, fading), profile or build_paper_cnn_profile())


@pytest.fixture
def env4():
    return make_env(0, 4)


@pytest.fixture
def report(request):
    """Record a one-line verdict for the acceptance summary."""

    def _report(number, passed, detail):
        line = f"CRITERION {number:>2}: {'PASS' if passed else 'FAIL'} - {detail}"
        CRITERIA.append(line)
        print(line)

    return _report


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
