import pytest
from fractions import Fraction

from kolmo.builder import build


@pytest.fixture(scope="session")
def desk_build():
    """The reference 11-level construction (n=2, epsilon=1/5)."""
    return build(2, Fraction(1, 5), 11)


@pytest.fixture(scope="session")
def small_build(desk_build):
    """First six levels of the reference construction."""
    return desk_build[:6]
