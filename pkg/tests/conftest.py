import pytest

from instances import GAMMA, S0, house_policies


@pytest.fixture
def policies():
    return house_policies()


@pytest.fixture
def s0():
    return S0


@pytest.fixture
def gamma():
    return GAMMA
