import numpy as np
import pytest

from anisospec.aniso_norms import DictionarySpec, build_dictionary
from anisospec.dynamics import AnosovMap


@pytest.fixture(scope="session")
def cat0():
    return AnosovMap.cat(0.0)


@pytest.fixture(scope="session")
def cat05():
    return AnosovMap.cat(0.05)


@pytest.fixture(scope="session")
def small_dicts(cat05):
    """Reduced dictionaries for unit tests (the default ones are exercised in the
    acceptance suite)."""
    kw = dict(K=3, n_random=4, slopes=(0.5,), curvatures=(0.1,), ncent=4, nx=6, ny=12)
    D0 = build_dictionary(DictionarySpec(**kw), cat05.P)
    D1 = build_dictionary(DictionarySpec(vector=True, **kw), cat05.P, order=2)
    return D0, D1


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(key=1234))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
