import hypothesis
import numpy as np
import pytest

from swaybench.controllers import IcConfig, run_trial
from swaybench.plant import DipParams
from swaybench.prts import StimulusConfig
from swaybench.spectral import default_grid, make_bands

hypothesis.settings.register_profile(
    "default", max_examples=50, deadline=None
)
hypothesis.settings.load_profile("default")


@pytest.fixture(scope="session")
def plant():
    return DipParams.default()


@pytest.fixture(scope="session")
def stim_cfg():
    return StimulusConfig()


@pytest.fixture(scope="session")
def stimulus(stim_cfg):
    return stim_cfg.build()


@pytest.fixture(scope="session")
def bands():
    return make_bands(default_grid())


@pytest.fixture(scope="session", autouse=True)
def _warm_jit(plant):
    """Compile the numba trial loops once so timed tests measure physics."""
    short = StimulusConfig(n_periods=2).build()
    run_trial(IcConfig.default(plant), plant, short, burn_in=False)
    yield


@pytest.fixture(scope="session")
def ic_trial(plant, stimulus):
    return run_trial(IcConfig.default(plant), plant, stimulus)
