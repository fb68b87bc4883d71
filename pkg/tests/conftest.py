import math
from fractions import Fraction as F

import pytest

from shrinktargets import (
    BlaschkeBoundary,
    DAryShift,
    GaussMap,
    GaussMeasure,
    LebesgueMeasure,
    MarkovLinear,
    MarkovStationaryMeasure,
    stationary_vector,
)

LOG2 = math.log(2)
GAUSS_H = math.pi ** 2 / (6 * LOG2)

M_EXAMPLE = [[F(3, 4), F(1, 4)], [F(1, 2), F(1, 2)]]


@pytest.fixture(scope="session")
def dary2():
    return DAryShift(2)


@pytest.fixture(scope="session")
def dary3():
    return DAryShift(3)


@pytest.fixture(scope="session")
def gauss():
    return GaussMap()


@pytest.fixture(scope="session")
def markov():
    p = stationary_vector(M_EXAMPLE)
    return MarkovLinear(M_EXAMPLE, p)


@pytest.fixture(scope="session")
def golden_markov():
    # golden-mean shift: transition 1->1 forbidden
    M = [[F(1, 2), F(1, 2)], [F(1, 1), F(0, 1)]]
    p = stationary_vector(M)
    return MarkovLinear(M, p)


@pytest.fixture(scope="session")
def blaschke_square():
    return BlaschkeBoundary([0, 0])


@pytest.fixture(scope="session")
def blaschke_two():
    return BlaschkeBoundary([0, 0.5])


@pytest.fixture(scope="session")
def lebesgue():
    return LebesgueMeasure()


@pytest.fixture(scope="session")
def gauss_measure():
    return GaussMeasure()


@pytest.fixture(scope="session")
def markov_measure(markov):
    return MarkovStationaryMeasure(markov.p, markov.M)
