import numpy as np
import pytest

from molitho.beamline import SelectorSpec, build_velocity_distribution
from molitho.config import default_config
from molitho.physics import AMU_KG, H, MoleculeSpec
from molitho.quantum import Interferometer, velocity_average


def speed_for_xi(xi, d=257.40, L=13.2, mass=720.0):
    """Speed (m/s) at which L / L_T equals ``xi``."""
    lam = xi * (d * 1e-9) ** 2 / (L * 1e-3)
    return H / (mass * AMU_KG * lam)


@pytest.fixture(scope="session")
def ref_cfg():
    return default_config()


@pytest.fixture(scope="session")
def ref_dist():
    return build_velocity_distribution(1070.0, MoleculeSpec(), SelectorSpec())


@pytest.fixture(scope="session")
def ref_spectrum(ref_dist):
    return velocity_average(Interferometer(), ref_dist, threads=4)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance")
    for line in mod.RESULTS:
        terminalreporter.write_line(line)
