from fractions import Fraction as F

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kolmo.pwl import PiecewiseLinear


@pytest.fixture(scope="module")
def psi01(small_build):
    return (
        PiecewiseLinear.from_state(small_build[0]),
        PiecewiseLinear.from_state(small_build[1]),
    )


def test_from_state_level0(psi01):
    psi0, _ = psi01
    assert psi0.knots() == [(F(-1), F(0)), (F(1), F(0))]
    assert psi0.eval(F(1, 3)) == 0


def test_from_state_level1(psi01):
    _, psi1 = psi01
    assert psi1.knots() == [
        (F(-1), F(0)),
        (F(-1, 15), F(0)),
        (F(1, 15), F(1, 15)),
        (F(1), F(1, 15)),
    ]


def test_knot_count_is_twice_towns(small_build):
    for s in small_build:
        psi = PiecewiseLinear.from_state(s)
        assert len(psi.xs) == 2 * len(s.towns)


def test_eval(psi01):
    _, psi1 = psi01
    assert psi1.eval(F(0)) == F(1, 30)
    assert psi1.eval(F(-1, 2)) == F(0)
    assert psi1.eval(F(2)) == F(1, 15)  # constant extension right
    assert psi1.eval(F(-5)) == F(0)  # constant extension left
    for x, y in psi1.knots():
        assert psi1.eval(x) == y


def test_lipschitz(psi01, small_build):
    psi0, psi1 = psi01
    assert psi0.lipschitz_constant() == 0
    assert psi1.lipschitz_constant() == F(1, 2)
    for s in small_build:
        lip = PiecewiseLinear.from_state(s).lipschitz_constant()
        assert lip <= 1 - F(1, 2**s.level) < 1


def test_sup_diff(psi01):
    psi0, psi1 = psi01
    assert psi1.sup_diff(psi0) == F(1, 15)
    assert psi0.sup_diff(psi1) == F(1, 15)
    assert psi1.sup_diff(psi1) == 0


def test_sup_diff_against_sampling_oracle(small_build):
    psi4 = PiecewiseLinear.from_state(small_build[4])
    psi5 = PiecewiseLinear.from_state(small_build[5])
    exact = psi5.sup_diff(psi4)
    sampled = max(
        abs(psi5.eval(x) - psi4.eval(x))
        for x in (F(-1) + F(2 * i, 4001) for i in range(4002))
    )
    assert sampled <= exact
    assert exact - sampled < F(1, 100)


def test_strictly_increasing_knots_required():
    with pytest.raises(ValueError):
        PiecewiseLinear([(F(0), F(0)), (F(0), F(1))])
    with pytest.raises(ValueError):
        PiecewiseLinear([])


@st.composite
def pwls(draw):
    xs = sorted(draw(st.sets(st.fractions(max_denominator=50), min_size=2, max_size=8)))
    ys = draw(
        st.lists(
            st.fractions(max_denominator=50),
            min_size=len(xs),
            max_size=len(xs),
        )
    )
    return PiecewiseLinear(list(zip(xs, ys)))


@given(pwls(), pwls())
@settings(max_examples=100, deadline=None)
def test_sup_diff_is_symmetric_metriclike(f, g):
    d = f.sup_diff(g)
    assert d == g.sup_diff(f)
    assert d >= 0
    assert f.sup_diff(f) == 0
    # sup over merged knots dominates pointwise differences anywhere
    lo = min(f.xs[0], g.xs[0])
    hi = max(f.xs[-1], g.xs[-1])
    for i in range(7):
        x = lo + (hi - lo) * F(i, 6)
        assert abs(f.eval(x) - g.eval(x)) <= d


def test_monotone_built_levels(small_build):
    for s in small_build:
        assert PiecewiseLinear.from_state(s).is_non_decreasing()
