import pytest

import snspdsim as ss


@pytest.fixture(scope="session")
def params():
    return ss.default_params()


@pytest.fixture(scope="session")
def bias():
    return ss.default_bias()


@pytest.fixture(scope="session")
def readout():
    return ss.ReadoutParams()
