import math

import pytest

from kmsgraph.series import SeriesBudget


@pytest.fixture
def budget():
    return SeriesBudget()


@pytest.fixture
def h():
    return math.log(2)
