"""The misleading linear inner candidate, reproduced exactly in Q(sqrt 2).

A family of uniformly spaced interval systems (base-gamma grids with small
gaps) paired with the linear map x -> alpha_p * x looks like a valid inner
function: at every finite refinement depth the grid images separate, the
plateau spacing shrinks, and refinements nest.  But the limit map is
linear, and linear maps collide: two points in different first-level boxes
share the exact image value 1/2.  Everything here is computed in Q(sqrt 2)
with zero tolerance.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from fractions import Fraction
from functools import cmp_to_key

from kolmo.pwl import PiecewiseLinear
from kolmo.rational import SQRT2, QuadraticNumber, quad_pair_sign


@dataclass(frozen=True)
class LinearCandidate:
    """Configuration of the linear candidate for n = 2.

    gamma is the expansion base (>= 2n+2) and epsilon the family shift,
    chosen inside (1/gamma^2, 1/gamma).  The weights are alpha_1 = 1 and
    alpha_2 = sqrt(2), rationally independent in Q(sqrt 2).
    """

    n: int = 2
    gamma: int = 10
    epsilon: Fraction = Fraction(1, 50)

    def __post_init__(self):
        if self.n != 2:
            raise ValueError("the exact lab is restricted to n = 2")
        if self.gamma < 2 * self.n + 2:
            raise ValueError(f"gamma must be >= {2 * self.n + 2}")
        lo = Fraction(1, self.gamma**2)
        hi = Fraction(1, self.gamma)
        if not lo < self.epsilon < hi:
            raise ValueError(f"epsilon must lie in ({lo}, {hi})")

    @property
    def alphas(self) -> tuple[QuadraticNumber, QuadraticNumber]:
        return (QuadraticNumber.of(1), SQRT2)

    @property
    def alpha_hat(self) -> QuadraticNumber:
        return SQRT2

    @property
    def families(self) -> int:
        return 2 * self.n + 1

    def interval_length(self, k: int) -> Fraction:
        return Fraction(self.gamma**2 - 1, self.gamma ** (k + 2))


def _interval_descriptors(
    c: LinearCandidate, k: int, q: int
) -> list[tuple[Fraction, Fraction, Fraction]]:
    """(d, lo, hi) for every interval of level k, family q, meeting [0, 1];
    lo/hi are clipped to [0, 1], d is the defining grid point."""
    if k < 1:
        raise ValueError("level k must be >= 1")
    if not 0 <= q <= 2 * c.n:
        raise ValueError(f"family index {q} outside 0..{2*c.n}")
    length = c.interval_length(k)
    shift = q * c.epsilon
    g = c.gamma**k
    # d/g + shift + length >= 0  and  d/g + shift <= 1
    d_min = -(shift + length) * g
    d_max = (1 - shift) * g
    out = []
    for i in range(math.ceil(d_min), math.floor(d_max) + 1):
        d = Fraction(i, g)
        lo = d + shift
        hi = lo + length
        out.append((d, max(lo, Fraction(0)), min(hi, Fraction(1))))
    return out


def bad_intervals(
    c: LinearCandidate, k: int, q: int
) -> list[tuple[Fraction, Fraction]]:
    """The level-k intervals of family q, clipped to [0, 1]."""
    return [(lo, hi) for _, lo, hi in _interval_descriptors(c, k, q)]


def family_coverage_minimum(c: LinearCandidate, k: int) -> int:
    """Exact minimum over x in [0, 1] of the number of families whose
    level-k interval system contains x (endpoint-arrangement sweep)."""
    systems = [bad_intervals(c, k, q) for q in range(c.families)]
    pts = {Fraction(0), Fraction(1)}
    for system in systems:
        for lo, hi in system:
            if 0 <= lo <= 1:
                pts.add(lo)
            if 0 <= hi <= 1:
                pts.add(hi)
    pts = sorted(pts)

    start_lists = [[lo for lo, _ in system] for system in systems]

    def covered(x: Fraction, starts, system) -> bool:
        i = bisect_right(starts, x) - 1
        return i >= 0 and x <= system[i][1]

    def count(x: Fraction) -> int:
        return sum(
            1 for st, s in zip(start_lists, systems) if covered(x, st, s)
        )

    best = min(count(x) for x in pts)
    for a, b in zip(pts, pts[1:]):
        best = min(best, count((a + b) / 2))
    return best


def bad_psi_level(
    c: LinearCandidate, k: int, p: int, q: int
) -> PiecewiseLinear:
    """The level-k staircase approximant for coordinate p, family q:
    plateau alpha_p * (d + q*epsilon) on each interval, linear on gaps."""
    alpha = c.alphas[p - 1]
    shift = q * c.epsilon
    knots = []
    for d, lo, hi in _interval_descriptors(c, k, q):
        value = alpha * (d + shift)
        if lo < hi:
            knots.append((lo, value))
            knots.append((hi, value))
        else:  # interval degenerated to a point after clipping
            knots.append((lo, value))
    return PiecewiseLinear(knots)


def staircase_sup_error(c: LinearCandidate, k: int, p: int, q: int) -> QuadraticNumber:
    """Exact sup of |staircase - alpha_p * x| over the staircase's span.

    The difference is piecewise linear, so the sup sits at a knot."""
    alpha = c.alphas[p - 1]
    f = bad_psi_level(c, k, p, q)
    best = QuadraticNumber.of(0)
    for x, y in zip(f.xs, f.ys):
        d = abs(y - alpha * x)
        if d > best:
            best = d
    return best


def lambda_value(c: LinearCandidate, k: int, p: int, q: int, i: int) -> QuadraticNumber:
    """Grid plateau value alpha_p * (i/gamma^k + q*epsilon)."""
    return c.alphas[p - 1] * (Fraction(i, c.gamma**k) + q * c.epsilon)


@dataclass
class BadLemmaReport:
    k_max: int
    spacing_ok: bool
    refinement_ok: bool
    grid_separation_ok: bool
    failures: list

    @property
    def ok(self) -> bool:
        return self.spacing_ok and self.refinement_ok and self.grid_separation_ok


def check_bad_lemmas(
    c: LinearCandidate, k_max: int = 2, grid_sample_stride: int | None = None
) -> BadLemmaReport:
    """Exact verification of the three finite-level conditions.

    1. plateau spacing: consecutive grid values differ by exactly
       alpha_p/gamma^k, which is below alpha_hat/2^k;
    2. refinement sandwich: one level down, values move by
       alpha_p*j/gamma^(k+1), staying within [0, eps_k - eps_(k+1)] where
       eps_k = alpha_hat/gamma^k;
    3. grid separation: the weighted sums at all level-k grid points are
       pairwise distinct (rational independence of {1, sqrt 2}).

    All checks are exact Q(sqrt 2) comparisons.  For k >= 3 the index
    loops and the ~10^6-point grid are thinned by ``grid_sample_stride``.
    """
    failures = []
    spacing_ok = True
    refinement_ok = True
    grid_ok = True
    g = c.gamma

    def stride_for(k: int) -> int:
        if grid_sample_stride is not None and k >= 3:
            return grid_sample_stride
        return 1

    for k in range(1, k_max + 1):
        gk = g**k
        eps_k = c.alpha_hat * Fraction(1, gk)
        eps_k1 = c.alpha_hat * Fraction(1, gk * g)
        budget = eps_k - eps_k1
        half_pow = c.alpha_hat * Fraction(1, 2**k)
        anchors = range(0, gk, stride_for(k))
        for p in (1, 2):
            alpha = c.alphas[p - 1]
            step = alpha * Fraction(1, gk)
            if not step <= half_pow:
                spacing_ok = False
                failures.append(f"spacing bound fails at k={k}, p={p}")
            for q in range(c.families):
                for i in anchors:
                    lo_v = lambda_value(c, k, p, q, i)
                    if lambda_value(c, k, p, q, i + 1) - lo_v != step:
                        spacing_ok = False
                        failures.append(
                            f"spacing identity fails at k={k}, p={p}, q={q}, i={i}"
                        )
                    for j in range(1, g):
                        delta = lambda_value(c, k + 1, p, q, g * i + j) - lo_v
                        if delta != alpha * Fraction(j, gk * g):
                            refinement_ok = False
                            failures.append(
                                f"refinement identity fails at k={k}, p={p}, "
                                f"q={q}, i={i}, j={j}"
                            )
                        if not (QuadraticNumber.of(0) <= delta <= budget):
                            refinement_ok = False
                            failures.append(
                                f"refinement sandwich fails at k={k}, p={p}, "
                                f"q={q}, i={i}, j={j}"
                            )

    for k in range(1, k_max + 1):
        gk = g**k
        idx = list(range(0, gk + 1, stride_for(k)))
        # Psi^0(i1/g^k, i2/g^k) = (i1 + sqrt2*i2)/g^k: distinct iff the
        # integer pairs differ.  Exact comparison sort, then neighbours.
        vals = sorted(
            ((i1, i2) for i1 in idx for i2 in idx),
            key=cmp_to_key(lambda u, v: quad_pair_sign(u[0] - v[0], u[1] - v[1])),
        )
        for (a1, a2), (b1, b2) in zip(vals, vals[1:]):
            if quad_pair_sign(b1 - a1, b2 - a2) == 0:
                grid_ok = False
                failures.append(
                    f"grid collision at k={k}: ({a1},{a2}) vs ({b1},{b2})"
                )
    return BadLemmaReport(
        k_max=k_max,
        spacing_ok=spacing_ok,
        refinement_ok=refinement_ok,
        grid_separation_ok=grid_ok,
        failures=failures,
    )


@dataclass
class CollisionWitness:
    x1: tuple[QuadraticNumber, QuadraticNumber]
    x2: tuple[QuadraticNumber, QuadraticNumber]
    value: QuadraticNumber
    same_box: bool
    box1: tuple[int, int]
    box2: tuple[int, int]


def _box_index(c: LinearCandidate, coord: QuadraticNumber, k: int = 1) -> int | None:
    """Index of the level-k, family-0 interval containing the coordinate."""
    for idx, (d, lo, hi) in enumerate(_interval_descriptors(c, k, 0)):
        if QuadraticNumber.of(lo) <= coord <= QuadraticNumber.of(hi):
            return idx
    return None


def collision_witness(c: LinearCandidate) -> CollisionWitness:
    """Two points in different first-level boxes with the same exact image.

    x1 = (0, sqrt2/4) and x2 = (1/2, 0) both map to 1/2 under
    x -> x_1 + sqrt2 * x_2, even though every finite level separates its
    own grid: the linear limit has lost injectivity on the cube diagonal.
    """
    zero = QuadraticNumber.of(0)
    x1 = (zero, SQRT2 * Fraction(1, 4))
    x2 = (QuadraticNumber.of(Fraction(1, 2)), zero)

    def embed(x):
        return x[0] + SQRT2 * x[1]

    v1 = embed(x1)
    v2 = embed(x2)
    if not v1 == v2:
        raise AssertionError("collision witness values differ")
    if not v1 == QuadraticNumber.of(Fraction(1, 2)):
        raise AssertionError("collision value is not 1/2")

    b1 = tuple(_box_index(c, coord) for coord in x1)
    b2 = tuple(_box_index(c, coord) for coord in x2)
    if any(b is None for b in b1 + b2):
        raise AssertionError("witness coordinates fall outside all boxes")
    return CollisionWitness(
        x1=x1,
        x2=x2,
        value=v1,
        same_box=(b1 == b2),
        box1=b1,
        box2=b2,
    )
