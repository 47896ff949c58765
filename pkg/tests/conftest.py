import pytest

from _helpers import carry_scenario
from forcedecomp.sim import run_scenario


@pytest.fixture(scope="session")
def carry_trial():
    return run_scenario(carry_scenario())


@pytest.fixture(scope="session")
def noisy_trial():
    return run_scenario(carry_scenario(noise=0.5))
