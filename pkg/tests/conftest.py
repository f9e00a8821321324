import numpy as np
import pytest

from afcmem.cavity import pinned_reference_cavity, reference_cavity, tmyag_profile
from afcmem.constants import NU0_TMYAG, TMYAG_COMBS
from afcmem.spectra import CombParams


def reference_comb(key: str, n_teeth: int = 9) -> CombParams:
    c = TMYAG_COMBS[key]
    return CombParams(c["d_c"], c["delta"], c["gamma_tilde"], c["d0"], NU0_TMYAG + c["detuning"], n_teeth)


@pytest.fixture(scope="session")
def profile():
    return tmyag_profile()


@pytest.fixture(scope="session")
def printed_cavity():
    return reference_cavity()


@pytest.fixture(scope="session")
def cavity():
    """Reference cavity with L nudged by ~14 nm onto the -3.19 GHz match."""
    return pinned_reference_cavity(dispersion=True)


@pytest.fixture(scope="session")
def cavity_no_dispersion():
    return pinned_reference_cavity(dispersion=False)


@pytest.fixture(scope="session")
def comb_b():
    return reference_comb("b")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
