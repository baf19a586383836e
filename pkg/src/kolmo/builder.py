"""Iterative refinement of the town system.

One refinement level runs in three stages, with plug insertion strictly
before any gap creation so the result is independent of the order in
which towns are processed:

1. every town at or above the length threshold gets a break point (its
   midpoint, perturbed away from exact coincidences when needed);
2. shifted copies of break points that fall in a hole between towns get
   covered by newly solved "plug" towns (a small exact linear system per
   hole fixes plug endpoints);
3. each selected town is split around its break point; the gap radius is
   kept small enough that no gap copy escapes its covering town and no
   two gap closures meet.

All geometry is rational and exact.
"""

from __future__ import annotations

from bisect import bisect_left, insort
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from kolmo.errors import BuilderError
from kolmo.rational import format_rational
from kolmo.towns import Hole, RefinementState, Town

# Gap-radius contraction factors: the town-distance terms get ALPHA, the
# inter-break-point terms get BETA, so that two gap closures created in one
# level can never meet (2*BETA < 1).
ALPHA = Fraction(2, 3)
BETA = Fraction(1, 3)

# Perturbation schedule: increments len/16, len/32, ... accumulate toward
# the hard cap len/8 (which keeps split halves at <= 5/8 of the parent).
PERTURB_MAX_STEPS = 64

THRESHOLD_BASE = Fraction(1, 2)


@dataclass(frozen=True)
class BreakPlan:
    """Everything decided about one break: the point, the clearances that
    bound the gap radius, the radius itself and the value step."""

    town_index: int  # index into the post-plug town list
    p: Fraction
    rho_plus: Fraction
    rho_minus: Fraction
    delta_plus: Fraction | None
    delta_minus: Fraction | None
    rho: Fraction
    eta: Fraction

    def audit_record(self, level: int) -> dict:
        def fmt(x):
            return format_rational(x) if x is not None else "inf"

        return {
            "type": "break",
            "level": level,
            "p": format_rational(self.p),
            "rho_plus": fmt(self.rho_plus),
            "rho_minus": fmt(self.rho_minus),
            "delta_plus": fmt(self.delta_plus),
            "delta_minus": fmt(self.delta_minus),
            "rho": fmt(self.rho),
            "eta": fmt(self.eta),
        }


@dataclass(frozen=True)
class PlugSolution:
    """Solved plug intervals for one hole: ``nu`` plugs [a_i, b_i] carrying
    values f_i, with ramps of slope exactly ``m_hat`` between them."""

    hole: Hole
    nu: int
    endpoints: tuple[tuple[Fraction, Fraction], ...]
    values: tuple[Fraction, ...]
    m_hat: Fraction

    def towns(self, birth_level: int) -> list[Town]:
        return [
            Town(a, b, v, "plug", birth_level)
            for (a, b), v in zip(self.endpoints, self.values)
        ]

    def audit_record(self, level: int) -> dict:
        return {
            "type": "plugs",
            "level": level,
            "hole": [format_rational(self.hole.left_end),
                     format_rational(self.hole.right_end)],
            "nu": self.nu,
            "endpoints": [[format_rational(a), format_rational(b)]
                          for a, b in self.endpoints],
            "values": [format_rational(v) for v in self.values],
            "m_hat": format_rational(self.m_hat),
        }


def default_epsilon(n: int) -> Fraction:
    """1/(2n+1): strictly inside the admissible (0, 1/(2n)], avoiding the
    systematic endpoint collisions the boundary value produces."""
    return Fraction(1, 2 * n + 1)


def initial_state(n: int, epsilon: Fraction | None = None) -> RefinementState:
    if n < 2:
        raise BuilderError("need spatial dimension n >= 2")
    eps = default_epsilon(n) if epsilon is None else Fraction(epsilon)
    root = Town(Fraction(-1), Fraction(1), Fraction(0), "root", 0)
    return RefinementState(n=n, epsilon=eps, level=0, towns=(root,))


def break_threshold(state: RefinementState) -> Fraction:
    """Length threshold for the level about to be built."""
    return THRESHOLD_BASE ** (state.level + 1)


def select_breakables(state: RefinementState) -> list[int]:
    """Indices of towns long enough to be split this level."""
    thr = break_threshold(state)
    return [i for i, t in enumerate(state.towns) if t.length >= thr]


def _endpoint_set(state: RefinementState) -> set[Fraction]:
    pts: set[Fraction] = set()
    for t in state.towns:
        pts.add(t.start)
        pts.add(t.end)
    return pts


def _has_conflict(
    state: RefinementState,
    p: Fraction,
    endpoints: set[Fraction],
    chosen: Sequence[Fraction],
) -> bool:
    eps = state.epsilon
    span = 2 * state.n
    # (a) a shifted copy of p coincides with a shifted copy of another
    # break point, i.e. their difference is a small integer multiple of eps
    for other in chosen:
        k = (p - other) / eps
        if k.denominator == 1 and abs(k) <= 2 * span:
            return True
    # (b)/(c) a shifted copy lands exactly on an existing town endpoint,
    # which would degenerate a clearance to zero
    for q in range(-span, span + 1):
        y = p - q * eps
        if -1 <= y <= 1 and y in endpoints:
            return True
    return False


def choose_breakpoint(
    state: RefinementState,
    town_index: int,
    chosen: Sequence[Fraction] = (),
) -> Fraction:
    """Midpoint of the town, perturbed by the first schedule step that
    clears all coincidence conflicts.

    The schedule accumulates increments len/16, len/32, ... toward the cap
    len/8, trying each magnitude on both sides, starting away from zero.
    """
    t = state.towns[town_index]
    mid = (t.start + t.end) / 2
    endpoints = _endpoint_set(state)
    if not _has_conflict(state, mid, endpoints, chosen):
        return mid
    length = t.length
    sign = 1 if mid >= 0 else -1
    step = Fraction(0)
    for k in range(1, PERTURB_MAX_STEPS + 1):
        step += length / Fraction(2 ** (k + 3))  # len/16, then +len/32, ...
        for s in (sign, -sign):
            p = mid + s * step
            if not _has_conflict(state, p, endpoints, chosen):
                return p
    raise BuilderError(
        f"no conflict-free break point within the len/8 budget for town "
        f"[{t.start}, {t.end}] at level {state.level}"
    )


def find_holes(
    state: RefinementState, breakpoints: Sequence[Fraction]
) -> list[Hole]:
    """Holes of the base system containing some shifted break-point copy.

    For each break point p and each relative shift q in -2n..2n whose copy
    p - q*epsilon stays inside [-1, 1], an uncovered copy records (p, q)
    against the hole that contains it.  A hole may collect several copies.
    """
    span = 2 * state.n
    eps = state.epsilon
    by_gap: dict[int, list[tuple[Fraction, int]]] = {}
    for p in breakpoints:
        for q in range(-span, span + 1):
            y = p - q * eps
            if not -1 <= y <= 1:
                continue
            kind, where = state.locate(y)
            if kind == "hole":
                by_gap.setdefault(where[0], []).append((p, q))
    holes = []
    for i in sorted(by_gap):
        pts = sorted(by_gap[i], key=lambda pq: pq[0] - pq[1] * eps)
        holes.append(
            Hole(
                left_index=i,
                left_end=state.towns[i].end,
                right_end=state.towns[i + 1].start,
                shifted_points=tuple(pts),
            )
        )
    return holes


def _solve_exact(matrix: list[list[Fraction]], rhs: list[Fraction]) -> list[Fraction]:
    """Gaussian elimination over the rationals; exact, no pivot growth issues."""
    m = [row[:] + [r] for row, r in zip(matrix, rhs)]
    size = len(m)
    for col in range(size):
        pivot = next((r for r in range(col, size) if m[r][col] != 0), None)
        if pivot is None:
            raise BuilderError("singular plug system")
        m[col], m[pivot] = m[pivot], m[col]
        inv = 1 / m[col][col]
        m[col] = [v * inv for v in m[col]]
        for r in range(size):
            if r != col and m[r][col] != 0:
                factor = m[r][col]
                m[r] = [a - factor * b for a, b in zip(m[r], m[col])]
    return [m[r][size] for r in range(size)]


def solve_plugs(
    hole: Hole, state: RefinementState, m_hat: Fraction
) -> PlugSolution:
    """Solve the 2*nu x 2*nu system fixing plug endpoints inside a hole.

    Unknowns are (a_1, b_1, ..., a_nu, b_nu).  The first nu+1 rows make the
    ramps between plugs (and to the hole's walls) have slope exactly m_hat;
    the remaining nu-1 rows center consecutive plugs symmetrically around
    their shifted points.
    """
    if not hole.shifted_points:
        raise BuilderError("hole without shifted points")
    eps = state.epsilon
    left_town = state.towns[hole.left_index]
    right_town = state.towns[hole.left_index + 1]
    b0, a_end = hole.left_end, hole.right_end
    v_l, v_r = left_town.value, right_town.value
    slope = (v_r - v_l) / (a_end - b0)
    if not slope < m_hat:
        raise BuilderError(
            f"hole slope {slope} not below the new slope cap {m_hat}"
        )
    p_hat = [p - q * eps for p, q in hole.shifted_points]
    nu = len(p_hat)
    f = [v_l] + [v_l + slope * (y - b0) for y in p_hat] + [v_r]

    size = 2 * nu
    mat = [[Fraction(0)] * size for _ in range(size)]
    rhs = [Fraction(0)] * size
    # slope rows: m_hat * (a_i - b_{i-1}) = f_i - f_{i-1}
    mat[0][0] = m_hat
    rhs[0] = f[1] - f[0] + m_hat * b0
    for i in range(2, nu + 1):
        row = i - 1
        mat[row][2 * (i - 1) - 1] = -m_hat  # b_{i-1}
        mat[row][2 * (i - 1)] = m_hat       # a_i
        rhs[row] = f[i] - f[i - 1]
    mat[nu][size - 1] = -m_hat
    rhs[nu] = f[nu + 1] - f[nu] - m_hat * a_end
    # symmetry rows: b_i + a_{i+1} = p_hat_i + p_hat_{i+1}
    for i in range(1, nu):
        row = nu + i
        mat[row][2 * i - 1] = Fraction(1)  # b_i
        mat[row][2 * i] = Fraction(1)      # a_{i+1}
        rhs[row] = p_hat[i - 1] + p_hat[i]

    sol = _solve_exact(mat, rhs)
    endpoints = tuple((sol[2 * i], sol[2 * i + 1]) for i in range(nu))
    values = tuple(f[1 : nu + 1])

    # ordering and containment must come out strict; a violation means the
    # perturbation stage upstream let a degenerate configuration through
    prev_b = b0
    for i, ((a, b), y) in enumerate(zip(endpoints, p_hat)):
        if not (prev_b < a and a <= y <= b):
            raise BuilderError(
                f"plug {i} in hole ({b0}, {a_end}) violates ordering"
            )
        prev_b = b
    if not prev_b < a_end:
        raise BuilderError("last plug touches the hole's right wall")
    return PlugSolution(hole, nu, endpoints, values, m_hat)


def _sorted_copy_positions(
    breakpoints: Sequence[Fraction], eps: Fraction, span: int
) -> list[Fraction]:
    out = []
    for p in breakpoints:
        for q in range(-span, span + 1):
            out.append(p - q * eps)
    out.sort()
    return out


def plan_gap(
    post_plug: RefinementState,
    town_index: int,
    p: Fraction,
    all_copies: list[Fraction],
) -> BreakPlan:
    """Gap radius and value step for one break, on the plug-completed state.

    rho_plus/rho_minus: tightest distance from any in-range copy of p to
    the left/right wall of its covering town.  delta_plus/delta_minus:
    nearest other break-point copy below/above any copy of p (copies of p
    itself at other shifts included).  The gap radius contracts these by
    ALPHA and BETA so gap copies stay strictly inside their towns and gap
    closures stay pairwise disjoint.
    """
    state = post_plug
    eps = state.epsilon
    span = 2 * state.n
    rho_plus = rho_minus = None
    for q in range(-span, span + 1):
        y = p - q * eps
        if not -1 <= y <= 1:
            continue
        kind, where = state.locate(y)
        if kind != "town":
            raise BuilderError(
                f"copy {y} of break point {p} is uncovered after plugging"
            )
        t = state.towns[where]
        left = y - t.start
        right = t.end - y
        if left <= 0 or right <= 0:
            raise BuilderError(
                f"copy {y} of break point {p} touches a town wall"
            )
        rho_plus = left if rho_plus is None else min(rho_plus, left)
        rho_minus = right if rho_minus is None else min(rho_minus, right)

    delta_plus = delta_minus = None
    for q in range(-span, span + 1):
        y = p - q * eps
        i = bisect_left(all_copies, y)
        # all copy positions are distinct, so all_copies[i] == y
        if i > 0:
            d = y - all_copies[i - 1]
            delta_plus = d if delta_plus is None else min(delta_plus, d)
        if i + 1 < len(all_copies):
            d = all_copies[i + 1] - y
            delta_minus = d if delta_minus is None else min(delta_minus, d)

    candidates = [ALPHA * rho_plus, ALPHA * rho_minus]
    if delta_plus is not None:
        candidates.append(BETA * delta_plus)
    if delta_minus is not None:
        candidates.append(BETA * delta_minus)
    rho = min(candidates)
    if rho <= 0:
        raise BuilderError(f"non-positive gap radius at break point {p}")

    t = state.towns[town_index]
    if town_index + 1 < len(state.towns):
        nxt = state.towns[town_index + 1]
        eta = min(rho, (nxt.value - t.value) / 2)
    else:
        eta = rho
    return BreakPlan(
        town_index=town_index,
        p=p,
        rho_plus=rho_plus,
        rho_minus=rho_minus,
        delta_plus=delta_plus,
        delta_minus=delta_minus,
        rho=rho,
        eta=eta,
    )


def refine(
    state: RefinementState, audit: list | None = None
) -> RefinementState:
    """One full refinement level; returns the state at level + 1.

    Break points are fixed first, then plugs for all holes are solved and
    inserted at once, and only then are gaps cut.  The three stages make
    the result independent of the order in which towns are visited.
    """
    new_level = state.level + 1
    breakable = select_breakables(state)
    if not breakable:
        return RefinementState(
            n=state.n, epsilon=state.epsilon, level=new_level, towns=state.towns
        )

    chosen: list[Fraction] = []
    for i in breakable:
        chosen.append(choose_breakpoint(state, i, chosen))

    holes = find_holes(state, chosen)
    m_hat = 1 - Fraction(1, 2**new_level)
    solutions = [solve_plugs(h, state, m_hat) for h in holes]

    plug_towns: list[Town] = []
    for sol in solutions:
        plug_towns.extend(sol.towns(new_level))
        if audit is not None:
            audit.append(sol.audit_record(new_level))

    breaking = {state.towns[i]: p for i, p in zip(breakable, chosen)}
    merged = sorted(
        list(state.towns) + plug_towns, key=lambda t: t.start
    )
    # plug ramps already run at the next level's slope cap, so the
    # intermediate state is tagged with the new level
    post_plug = RefinementState(
        n=state.n, epsilon=state.epsilon, level=new_level, towns=tuple(merged)
    )

    all_copies = _sorted_copy_positions(chosen, state.epsilon, 2 * state.n)

    final: list[Town] = []
    for idx, t in enumerate(post_plug.towns):
        p = breaking.get(t)
        if p is None:
            final.append(t)
            continue
        plan = plan_gap(post_plug, idx, p, all_copies)
        if audit is not None:
            audit.append(plan.audit_record(new_level))
        final.append(Town(t.start, p - plan.rho, t.value, "split-left", new_level))
        final.append(
            Town(p + plan.rho, t.end, t.value + plan.eta, "split-right", new_level)
        )

    return RefinementState(
        n=state.n, epsilon=state.epsilon, level=new_level, towns=tuple(final)
    )


def build(
    n: int,
    epsilon: Fraction | None = None,
    levels: int = 0,
    audit: list | None = None,
) -> list[RefinementState]:
    """States for levels 0..levels; deterministic for fixed inputs."""
    if levels < 0:
        raise BuilderError("levels must be >= 0")
    states = [initial_state(n, epsilon)]
    for _ in range(levels):
        states.append(refine(states[-1], audit=audit))
    return states
