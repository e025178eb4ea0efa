import numpy as np
import pytest

from rispriv.gradcheck import synthetic_instance
from rispriv.linalg import cgauss
from rispriv.scenario import derive_priors, desk_config, sample_channels


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def desk_instance(rng):
    """Physical-scale desk draw: (config, channels, priors, w_c, w_s)."""
    cfg = desk_config()
    channels = sample_channels(cfg, rng)
    priors = derive_priors(cfg, rng)
    w_c = cgauss(rng, cfg.m_min, cfg.K)
    w_s = cgauss(rng, cfg.m_A, cfg.K)
    return cfg, channels, priors, w_c, w_s


@pytest.fixture
def unit_instance(rng):
    """Order-one synthetic draw at the small verification dims."""
    return synthetic_instance(rng)
