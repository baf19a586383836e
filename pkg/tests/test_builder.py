from fractions import Fraction as F

import pytest

from kolmo.builder import (
    ALPHA,
    BETA,
    break_threshold,
    build,
    choose_breakpoint,
    find_holes,
    initial_state,
    plan_gap,
    refine,
    select_breakables,
    solve_plugs,
)
from kolmo.errors import BuilderError
from kolmo.towns import Hole, RefinementState, Town


@pytest.fixture(scope="module")
def s01(small_build):
    return small_build[0], small_build[1]


def test_initial_state_guards():
    with pytest.raises(BuilderError):
        initial_state(1)
    s = initial_state(3)
    assert s.epsilon == F(1, 7)
    assert s.towns[0].origin == "root"


def test_select_breakables(s01):
    s0, s1 = s01
    assert break_threshold(s0) == F(1, 2)
    assert select_breakables(s0) == [0]
    assert break_threshold(s1) == F(1, 4)
    assert select_breakables(s1) == [0, 1]
    tiny = RefinementState(
        n=2,
        epsilon=F(1, 5),
        level=3,
        towns=(
            Town(F(-1), F(-63, 64), F(0)),
            Town(F(0), F(1, 32), F(1, 100)),
        ),
    )
    assert select_breakables(tiny) == []


def test_choose_breakpoint_examples(s01):
    s0, s1 = s01
    assert choose_breakpoint(s0, 0) == F(0)
    # midpoint 8/15 has the copy 8/15 - 3/5 = -1/15 on a town wall, so the
    # first schedule step len/16 = 7/120 fires, away from zero
    assert choose_breakpoint(s1, 1) == F(71, 120)
    assert choose_breakpoint(s1, 0) == F(-71, 120)


def test_choose_breakpoint_avoids_other_breaks(s01):
    _, s1 = s01
    p_right = choose_breakpoint(s1, 1)
    # a fake existing break point an exact multiple of epsilon away from
    # the midpoint-perturbation candidate forces another schedule step
    clash = p_right - 2 * s1.epsilon
    p2 = choose_breakpoint(s1, 1, chosen=[clash])
    assert p2 != p_right
    assert (p2 - clash) / s1.epsilon % 1 != 0


def test_find_holes(s01):
    s0, s1 = s01
    assert find_holes(s0, [F(0)]) == []
    holes = find_holes(s1, [F(-71, 120), F(71, 120)])
    assert len(holes) == 1
    h = holes[0]
    assert (h.left_end, h.right_end) == (F(-1, 15), F(1, 15))
    assert h.shifted_points == ((F(71, 120), 3), (F(-71, 120), -3))
    # shifted positions sorted and strictly inside
    ys = [p - q * s1.epsilon for p, q in h.shifted_points]
    assert ys == [F(-1, 120), F(1, 120)]


def _residuals(sol, hole, f0, f_end, m_hat):
    """Independent oracle: substitute the solution back into the slope and
    symmetry equations."""
    pts = [p - q * F(1, 5) for p, q in hole.shifted_points]
    a = [ep[0] for ep in sol.endpoints]
    b = [ep[1] for ep in sol.endpoints]
    fs = [f0] + list(sol.values) + [f_end]
    bounds_a = a + [hole.right_end]
    bounds_b = [hole.left_end] + b
    slope_res = [
        m_hat * (bounds_a[i] - bounds_b[i]) - (fs[i + 1] - fs[i])
        for i in range(len(a) + 1)
    ]
    sym_res = [
        (b[i] - pts[i]) - (pts[i + 1] - a[i + 1]) for i in range(len(a) - 1)
    ]
    return slope_res, sym_res


def test_solve_plugs_nu1():
    # hand-solvable configuration: one shifted point in a unit hole
    # between towns [-1,0]@0 and [1,2]@1/2 (psi slope 1/2 across it)
    state = RefinementState(
        n=2,
        epsilon=F(1, 5),
        level=1,
        towns=(Town(F(-1), F(0), F(0)), Town(F(1), F(2), F(1, 2))),
        check=False,
    )
    hole = Hole(
        left_index=0,
        left_end=F(0),
        right_end=F(1),
        shifted_points=((F(2, 5), 0),),
    )
    sol = solve_plugs(hole, state, m_hat=F(3, 4))
    assert sol.endpoints == ((F(4, 15), F(3, 5)),)
    assert sol.values == (F(1, 5),)
    slope_res, sym_res = _residuals(sol, hole, F(0), F(1, 2), F(3, 4))
    assert all(r == 0 for r in slope_res)
    assert all(r == 0 for r in sym_res)


def test_solve_plugs_nu2():
    state = RefinementState(
        n=2,
        epsilon=F(1, 5),
        level=1,
        towns=(Town(F(-1), F(0), F(0)), Town(F(1), F(2), F(1, 2))),
        check=False,
    )
    hole = Hole(
        left_index=0,
        left_end=F(0),
        right_end=F(1),
        shifted_points=((F(1, 3), 0), (F(2, 3), 0)),
    )
    sol = solve_plugs(hole, state, m_hat=F(3, 4))
    assert sol.endpoints == ((F(2, 9), F(7, 18)), (F(11, 18), F(7, 9)))
    assert sol.values == (F(1, 6), F(1, 3))
    # symmetry: b1 - p1 = p2 - a2 = 1/18
    assert F(7, 18) - F(1, 3) == F(1, 18)
    assert F(2, 3) - F(11, 18) == F(1, 18)
    slope_res, sym_res = _residuals(sol, hole, F(0), F(1, 2), F(3, 4))
    assert all(r == 0 for r in slope_res)
    assert all(r == 0 for r in sym_res)


def test_solve_plugs_symmetric_point():
    # a single shifted point at the hole's midpoint with symmetric values
    # gives a plug symmetric about the midpoint
    state = RefinementState(
        n=2,
        epsilon=F(1, 5),
        level=1,
        towns=(Town(F(-1), F(0), F(0)), Town(F(1), F(2), F(1, 2))),
        check=False,
    )
    hole = Hole(
        left_index=0,
        left_end=F(0),
        right_end=F(1),
        shifted_points=((F(1, 2), 0),),
    )
    sol = solve_plugs(hole, state, m_hat=F(3, 4))
    (a, b), = sol.endpoints
    assert F(1, 2) - a == b - F(1, 2)


def test_level0_gap_plan(s01):
    s0, _ = s01
    plan = plan_gap(s0, 0, F(0), sorted(F(0) - q * F(1, 5) for q in range(-4, 5)))
    assert plan.rho_plus == F(1, 5)
    assert plan.rho_minus == F(1, 5)
    assert plan.delta_plus == F(1, 5)
    assert plan.delta_minus == F(1, 5)
    assert plan.rho == F(1, 15)
    assert plan.eta == F(1, 15)  # last town: eta = rho


def test_refine_level0(s01):
    s0, s1 = s01
    assert [
        (t.start, t.end, t.value, t.origin) for t in s1.towns
    ] == [
        (F(-1), F(-1, 15), F(0), "split-left"),
        (F(1, 15), F(1), F(1, 15), "split-right"),
    ]


def test_refine_twice_full_trace(small_build):
    s2 = small_build[2]
    expected = [
        (F(-1), F(-641, 1080), F(0), "split-left"),
        (F(-637, 1080), F(-1, 15), F(1, 540), "split-right"),
        (F(-1, 36), F(-1, 180), F(7, 240), "plug"),
        (F(1, 180), F(1, 36), F(3, 80), "plug"),
        (F(1, 15), F(637, 1080), F(1, 15), "split-left"),
        (F(641, 1080), F(1), F(37, 540), "split-right"),
    ]
    assert [(t.start, t.end, t.value, t.origin) for t in s2.towns] == expected
    assert all(t.birth_level == 2 for t in s2.towns)


def test_refine_no_breakables_bumps_level():
    tiny = RefinementState(
        n=2,
        epsilon=F(1, 5),
        level=4,
        towns=(
            Town(F(-1), F(-63, 64), F(0)),
            Town(F(0), F(1, 64), F(1, 1000)),
        ),
    )
    nxt = refine(tiny)
    assert nxt.level == 5
    assert nxt.towns == tiny.towns


def test_build_is_deterministic():
    a = build(2, F(1, 5), 3)
    b = build(2, F(1, 5), 3)
    assert [s.towns for s in a] == [s.towns for s in b]


def test_build_guards():
    with pytest.raises(BuilderError):
        build(2, F(1, 5), -1)
    with pytest.raises(Exception):
        build(2, F(1, 3), 1)  # epsilon > 1/(2n)


def test_town_counts_frozen(small_build):
    assert [len(s.towns) for s in small_build] == [1, 2, 6, 12, 24, 53]


def test_gap_closures_disjoint_within_level():
    # all gaps cut in one level, together with every shifted copy, must
    # have pairwise disjoint closures
    audit: list = []
    states = build(2, F(1, 5), 5, audit=audit)
    eps = F(1, 5)
    by_level: dict[int, list[tuple[F, F]]] = {}
    for rec in audit:
        if rec["type"] != "break":
            continue
        p = F(rec["p"])
        rho = F(rec["rho"])
        by_level.setdefault(rec["level"], []).append((p - rho, p + rho))
    for level, gaps in by_level.items():
        copies = []
        for lo, hi in gaps:
            for q in range(-4, 5):
                copies.append((lo - q * eps, hi - q * eps))
        copies.sort()
        for (a1, b1), (a2, b2) in zip(copies, copies[1:]):
            assert b1 < a2, f"gap closures meet at level {level}"


def test_slope_caps_and_monotonicity(small_build):
    from kolmo.pwl import PiecewiseLinear

    for s in small_build:
        psi = PiecewiseLinear.from_state(s)
        assert psi.lipschitz_constant() <= s.slope_cap
        assert psi.is_non_decreasing()


def test_broken_towns_had_threshold_length(small_build):
    # every town split at level j+1 had length >= (1/2)^(j+1)
    for prev, nxt in zip(small_build, small_build[1:]):
        thr = break_threshold(prev)
        split_parents = set()
        for t in nxt.towns:
            if t.origin in ("split-left", "split-right") and t.birth_level == nxt.level:
                # parent is the unique town of prev containing it
                kind, where = prev.locate(t.start)
                assert kind == "town"
                split_parents.add(where)
        for i in split_parents:
            assert prev.towns[i].length >= thr
