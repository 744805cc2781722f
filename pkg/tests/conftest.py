import numpy as np
import pytest

from pdae_split import problems


@pytest.fixture(scope="session")
def im40():
    return problems.build_integral_mean(40)


@pytest.fixture(scope="session")
def subset40():
    return problems.build_subset(40)


@pytest.fixture(scope="session")
def mech20():
    return problems.build_mechanical(20)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
