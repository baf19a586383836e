"""Mechanical checks of the construction's guarantees.

Per level: diameter decay, exact minimum family coverage, strict plateau
monotonicity (disjoint images), and the Lipschitz slope cap.  Across
levels: exact sup-norm differences and their decay.  Across products of
towns: disjointness of cube images under the weighted embedding, exact in
Q(sqrt 2) for the default weights and directed-rounded mpfr otherwise.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cmp_to_key
from typing import Sequence

import numpy as np

from kolmo.bigfloat import BigFloatContext
from kolmo.pwl import PiecewiseLinear
from kolmo.rational import QuadraticNumber, format_rational, quad_pair_sign
from kolmo.towns import RefinementState

_SQRT2 = math.sqrt(2.0)


# ---------------------------------------------------------------------------
# per-level criterion checks
# ---------------------------------------------------------------------------


def diameter_envelope(level: int) -> Fraction:
    """Decay target for the largest town: max(2*(3/4)^j, (1/2)^j)."""
    return max(2 * Fraction(3, 4) ** level, Fraction(1, 2) ** level)


@dataclass
class VerificationReport:
    level: int
    max_diameter: Fraction
    min_coverage: int
    max_gap_families: int
    monotone: bool
    slope_cap_ok: bool
    coverage_ok: bool
    diameter_ok: bool
    image_separation_ok: bool | None = None
    min_image_gap: object = None  # mpfr when a separation check ran
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "max_diameter": format_rational(self.max_diameter),
            "min_coverage": self.min_coverage,
            "max_gap_families": self.max_gap_families,
            "monotone": self.monotone,
            "slope_cap_ok": self.slope_cap_ok,
            "coverage_ok": self.coverage_ok,
            "diameter_ok": self.diameter_ok,
            "image_separation_ok": self.image_separation_ok,
            "min_image_gap": (
                None if self.min_image_gap is None else repr(self.min_image_gap)
            ),
            "failures": list(self.failures),
        }


def check_criterion(state: RefinementState) -> VerificationReport:
    """Exact per-level check of the four construction conditions."""
    failures: list[str] = []

    for i, (a, b) in enumerate(zip(state.towns, state.towns[1:])):
        if not a.end < b.start:
            failures.append(f"towns {i},{i+1} overlap or touch")
    if failures:
        # broken structure: the sweeps below assume disjoint sorted towns
        return VerificationReport(
            level=state.level,
            max_diameter=state.max_diameter,
            min_coverage=-1,
            max_gap_families=-1,
            monotone=False,
            slope_cap_ok=False,
            coverage_ok=False,
            diameter_ok=False,
            failures=failures,
        )

    max_diam = state.max_diameter
    envelope = diameter_envelope(state.level)
    diameter_ok = max_diam <= envelope
    if not diameter_ok:
        failures.append(f"max diameter {max_diam} exceeds envelope {envelope}")

    min_cov = state.min_coverage()
    coverage_ok = min_cov >= 2 * state.n
    if not coverage_ok:
        failures.append(f"min coverage {min_cov} below {2 * state.n}")

    monotone = True
    for i, (a, b) in enumerate(zip(state.towns, state.towns[1:])):
        if not a.value < b.value:
            monotone = False
            failures.append(
                f"plateau values not strictly increasing at towns {i},{i+1}: "
                f"{a.value} vs {b.value}"
            )

    cap = state.slope_cap
    lip = PiecewiseLinear.from_state(state).lipschitz_constant()
    slope_cap_ok = lip <= cap
    if not slope_cap_ok:
        failures.append(f"Lipschitz constant {lip} exceeds cap {cap}")

    return VerificationReport(
        level=state.level,
        max_diameter=max_diam,
        min_coverage=min_cov,
        max_gap_families=state.max_gap_families(),
        monotone=monotone,
        slope_cap_ok=slope_cap_ok,
        coverage_ok=coverage_ok,
        diameter_ok=diameter_ok,
        failures=failures,
    )


# ---------------------------------------------------------------------------
# convergence across levels
# ---------------------------------------------------------------------------


@dataclass
class ConvergenceReport:
    sup_diffs: list[Fraction]
    ratios: list[Fraction]
    max_ratio: Fraction | None
    total: Fraction

    def fitted_rate(self) -> float | None:
        """Geometric-mean decay rate across the whole sequence."""
        nz = [d for d in self.sup_diffs if d > 0]
        if len(nz) < 2:
            return None
        return float(nz[-1] / nz[0]) ** (1.0 / (len(nz) - 1))


def check_convergence(states: Sequence[RefinementState]) -> ConvergenceReport:
    """Exact sup-diff sequence between consecutive levels plus its
    adjacent ratios; the max ratio is the measured decay rate."""
    psis = [PiecewiseLinear.from_state(s) for s in states]
    diffs = [b.sup_diff(a) for a, b in zip(psis, psis[1:])]
    ratios = [b / a for a, b in zip(diffs, diffs[1:]) if a > 0]
    return ConvergenceReport(
        sup_diffs=diffs,
        ratios=ratios,
        max_ratio=max(ratios) if ratios else None,
        total=sum(diffs, Fraction(0)),
    )


def tail_bound(state: RefinementState) -> Fraction:
    """Bound on how far the function can still move past this level.

    On a hole all later values stay between the bounding plateaus, so the
    drift there is at most the value jump across the hole; on a town the
    right part gains at most half the value gap to its successor per split,
    staying below the successor's value.  The last town has no successor:
    each split adds at most a third of the current length and keeps at most
    5/8 of it, so the total gain is bounded by (1/3)/(1 - 5/8) = 8/9 of its
    length.
    """
    towns = state.towns
    jump = max(
        (b.value - a.value for a, b in zip(towns, towns[1:])),
        default=Fraction(0),
    )
    last = towns[-1].length * Fraction(8, 9)
    return max(jump, last)


# ---------------------------------------------------------------------------
# cube-image separation
# ---------------------------------------------------------------------------


class SeparationVerdict(enum.Enum):
    PASS = "pass"
    FAIL = "fail"
    INCONCLUSIVE = "inconclusive"


@dataclass
class SeparationResult:
    verdict: SeparationVerdict
    min_gap: object  # mpfr lower bound on the smallest inter-image gap
    cube_count: int
    at_level: int
    tail: Fraction
    mode: str  # "exact" or "mpfr"

    @property
    def passed(self) -> bool:
        return self.verdict is SeparationVerdict.PASS


def default_lambdas(n: int):
    """Embedding weights 2^((p-1)/n); exact in Q(sqrt 2) for n = 2,
    exponent list (handled by the mpfr path) otherwise."""
    if n == 2:
        return (
            QuadraticNumber.of(1),
            QuadraticNumber(Fraction(0), Fraction(1)),
        )
    return tuple(("exp2", Fraction(p, n)) for p in range(n))


def _as_quadratic_weights(lambdas) -> list[QuadraticNumber] | None:
    out = []
    for lam in lambdas:
        if isinstance(lam, QuadraticNumber):
            out.append(lam)
        elif isinstance(lam, (int, Fraction)):
            out.append(QuadraticNumber.of(Fraction(lam)))
        else:
            return None
    return out


def _town_value_ranges(
    state: RefinementState, psi: PiecewiseLinear | None
) -> tuple[list[Fraction], list[Fraction]]:
    """Per town, the exact value range of the (possibly deeper) function
    on it; with the state's own function these are the plateau points."""
    if psi is None:
        vals = [t.value for t in state.towns]
        return vals, list(vals)
    lo = [psi.eval(t.start) for t in state.towns]
    hi = [psi.eval(t.end) for t in state.towns]
    return lo, hi


def _family_indices(state: RefinementState) -> list[list[int]]:
    """Per family q, indices of towns whose shifted copy meets [0, 1]."""
    out = []
    for q in range(state.families):
        off = q * state.epsilon
        out.append(
            [
                i
                for i, t in enumerate(state.towns)
                if t.start + off <= 1 and t.end + off >= 0
            ]
        )
    return out


_qsign = quad_pair_sign


def _qcmp(x: tuple[int, int], y: tuple[int, int]) -> int:
    return _qsign(x[0] - y[0], x[1] - y[1])


def _exact_walk(per_axis: list[dict], axis_indices: list[list[int]]):
    """Walk every cube of the given product set in image order.

    ``per_axis[p]`` holds integer tables (common denominator factored out):
    ``lo_a/lo_b`` and ``hi_a/hi_b`` for the sqrt2-free and sqrt2 parts of
    lambda_p * value, plus float sort keys.  Returns
    ``(overlap_found, min_gap_pair, cube_count)``; pairs encode scaled
    ``a + b*sqrt(2)`` exactly.
    """
    shape = tuple(len(ix) for ix in axis_indices)
    count = math.prod(shape)
    if count == 0:
        return False, None, 0

    key_arrs = [
        np.asarray([per_axis[p]["key"][i] for i in ix])
        for p, ix in enumerate(axis_indices)
    ]
    total = key_arrs[0]
    for arr in key_arrs[1:]:
        total = np.add.outer(total, arr)
    flat = total.ravel()
    order = np.argsort(flat, kind="stable")
    axes = [np.asarray(ix, dtype=np.int64) for ix in axis_indices]

    def cube_pairs(flat_idx: int):
        coords = np.unravel_index(flat_idx, shape)
        la = lb = ha = hb = 0
        for p, (axis, c) in enumerate(zip(axes, coords)):
            t = int(axis[int(c)])
            tab = per_axis[p]
            la += tab["lo_a"][t]
            lb += tab["lo_b"][t]
            ha += tab["hi_a"][t]
            hb += tab["hi_b"][t]
        return (la, lb), (ha, hb)

    # regroup float-tied neighbours and order those few exactly
    ordered: list[int] = []
    order_list = order.tolist()
    flat_sorted = flat[order].tolist()
    i = 0
    while i < count:
        j = i + 1
        while j < count and flat_sorted[j] - flat_sorted[j - 1] < 1e-9:
            j += 1
        group = order_list[i:j]
        if len(group) > 1:
            group.sort(
                key=cmp_to_key(
                    lambda u, v: _qcmp(cube_pairs(u)[0], cube_pairs(v)[0])
                )
            )
        ordered.extend(group)
        i = j

    overlap = False
    min_gap: tuple[int, int] | None = None
    prev_hi: tuple[int, int] | None = None
    for flat_idx in ordered:
        lo, hi = cube_pairs(flat_idx)
        if prev_hi is not None:
            gap = (lo[0] - prev_hi[0], lo[1] - prev_hi[1])
            if _qsign(*gap) <= 0:
                return True, gap, count
            if min_gap is None or _qcmp(gap, min_gap) < 0:
                min_gap = gap
        if prev_hi is None or _qcmp(hi, prev_hi) > 0:
            prev_hi = hi
    return False, min_gap, count


def _pair_to_mpfr(pair, scale: int, ctx: BigFloatContext):
    if pair is None:
        return None
    a, b = pair
    val = ctx.add(
        ctx.div(ctx.mpfr(Fraction(a)), ctx.mpfr(Fraction(scale))),
        ctx.mul(
            ctx.div(ctx.mpfr(Fraction(b)), ctx.mpfr(Fraction(scale))),
            ctx.sqrt(2),
        ),
    )
    return val


def check_cube_separation(
    state: RefinementState,
    lambdas=None,
    psi: PiecewiseLinear | None = None,
    tail: Fraction = Fraction(0),
    precision: int | None = None,
) -> SeparationResult:
    """Disjointness of cube images under x -> sum_p lambda_p * psi(x_p).

    Cubes are n-fold products of this state's towns, enumerated per family
    q over the towns whose shifted copy meets [0, 1].  With ``psi`` omitted
    the state's own plateau function is used and images are points; a
    deeper function spreads each image into an exact interval.  Images are
    widened by n*||lambda||_1*tail before the disjointness test, so a
    positive ``tail`` (a bound on remaining drift of the limit) makes the
    verdict meaningful for the limit function:

    * FAIL          -- raw images already intersect,
    * INCONCLUSIVE  -- raw images disjoint but the widening swallows a gap,
    * PASS          -- widened images disjoint.
    """
    n = state.n
    lams = default_lambdas(n) if lambdas is None else tuple(lambdas)
    if len(lams) != n:
        raise ValueError(f"need {n} weights, got {len(lams)}")
    quad = _as_quadratic_weights(lams)
    ctx = BigFloatContext(precision)
    lo_vals, hi_vals = _town_value_ranges(state, psi)

    if quad is None:
        return _mpfr_separation(state, lams, lo_vals, hi_vals, tail, ctx)

    # exact path: scale all rational parts to one common denominator
    denoms = {1}
    products = []
    for lam in quad:
        pa_lo = [lam.a * v for v in lo_vals]
        pb_lo = [lam.b * v for v in lo_vals]
        pa_hi = [lam.a * v for v in hi_vals]
        pb_hi = [lam.b * v for v in hi_vals]
        products.append((pa_lo, pb_lo, pa_hi, pb_hi))
        for arr in (pa_lo, pb_lo, pa_hi, pb_hi):
            denoms.update(f.denominator for f in arr)
    scale = math.lcm(*denoms)

    def ints(arr):
        return [f.numerator * (scale // f.denominator) for f in arr]

    per_axis = []
    for pa_lo, pb_lo, pa_hi, pb_hi in products:
        per_axis.append(
            {
                "lo_a": ints(pa_lo),
                "lo_b": ints(pb_lo),
                "hi_a": ints(pa_hi),
                "hi_b": ints(pb_hi),
                "key": [
                    float(a) + float(b) * _SQRT2
                    for a, b in zip(pa_lo, pb_lo)
                ],
            }
        )

    t_count = len(state.towns)
    families = _family_indices(state)

    # full cube set first: it contains every family's cube set, so a pass
    # here settles all of them at once
    full = [list(range(t_count))] * n
    overlap, min_gap, cube_count = _exact_walk(per_axis, full)
    if overlap:
        worst = None
        cube_count = 0
        for idx in families:
            ov, gap, cnt = _exact_walk(per_axis, [idx] * n)
            cube_count += cnt
            if ov:
                return SeparationResult(
                    SeparationVerdict.FAIL,
                    _pair_to_mpfr(gap, scale, ctx),
                    cube_count,
                    state.level,
                    tail,
                    "exact",
                )
            if gap is not None and (worst is None or _qcmp(gap, worst) < 0):
                worst = gap
        min_gap = worst

    verdict = SeparationVerdict.PASS
    if tail > 0 and min_gap is not None:
        # widened disjointness: gap > 2 * n * ||lambda||_1 * tail, exactly
        norm1 = QuadraticNumber.of(0)
        for lam in quad:
            norm1 = norm1 + abs(lam)
        widening = norm1 * (Fraction(2 * n) * tail)
        gap_q = QuadraticNumber(
            Fraction(min_gap[0], scale), Fraction(min_gap[1], scale)
        )
        if not gap_q > widening:
            verdict = SeparationVerdict.INCONCLUSIVE
    return SeparationResult(
        verdict,
        _pair_to_mpfr(min_gap, scale, ctx),
        cube_count,
        state.level,
        tail,
        "exact",
    )


def _mpfr_separation(
    state: RefinementState,
    lams,
    lo_vals: list[Fraction],
    hi_vals: list[Fraction],
    tail: Fraction,
    ctx: BigFloatContext,
) -> SeparationResult:
    """Directed-rounding fallback for weights outside Q(sqrt 2).

    Every image endpoint is bracketed (lows rounded down, highs rounded
    up); a gap that stays positive after outward rounding and widening is
    a rigorous separation, and ties below the working precision come back
    INCONCLUSIVE rather than failing outright.
    """
    n = state.n

    def weight(lam, direction):
        if isinstance(lam, tuple) and lam and lam[0] == "exp2":
            return ctx.root_of_two(lam[1], direction)
        return ctx.mpfr(Fraction(lam) if isinstance(lam, (int, Fraction)) else lam, direction)

    lam_dn = [weight(l, -1) for l in lams]
    lam_up = [weight(l, +1) for l in lams]

    # psi values are >= 0, so directed products need matching directions
    per_axis = []
    for p in range(n):
        lo_dn = [ctx.mul(lam_dn[p], ctx.mpfr(v, -1), -1) for v in lo_vals]
        hi_up = [ctx.mul(lam_up[p], ctx.mpfr(v, +1), +1) for v in hi_vals]
        lo_up = [ctx.mul(lam_up[p], ctx.mpfr(v, +1), +1) for v in lo_vals]
        hi_dn = [ctx.mul(lam_dn[p], ctx.mpfr(v, -1), -1) for v in hi_vals]
        per_axis.append(
            {
                "lo_dn": lo_dn,
                "hi_up": hi_up,
                "lo_up": lo_up,
                "hi_dn": hi_dn,
                "key": [float(x) for x in lo_dn],
            }
        )

    norm1_up = None
    for lam in lam_up:
        norm1_up = lam if norm1_up is None else ctx.add(norm1_up, lam, +1)
    widening = ctx.mul(ctx.mul(norm1_up, ctx.mpfr(tail, +1), +1), ctx.mpfr(2 * n), +1)

    min_gap_dn = None
    indeterminate = False
    total_count = 0
    for idx in _family_indices(state):
        shape = (len(idx),) * n
        count = math.prod(shape)
        total_count += count
        if count == 0:
            continue
        key_arrs = [np.asarray([per_axis[p]["key"][i] for i in idx]) for p in range(n)]
        total = key_arrs[0]
        for arr in key_arrs[1:]:
            total = np.add.outer(total, arr)
        order = np.argsort(total.ravel(), kind="stable")
        axis = np.asarray(idx, dtype=np.int64)

        def cube(flat_idx: int):
            coords = np.unravel_index(flat_idx, shape)
            lo_dn = lo_up = hi_dn = hi_up = None
            for p, c in enumerate(coords):
                tab = per_axis[p]
                t = int(axis[int(c)])
                lo_dn = tab["lo_dn"][t] if lo_dn is None else ctx.add(lo_dn, tab["lo_dn"][t], -1)
                lo_up = tab["lo_up"][t] if lo_up is None else ctx.add(lo_up, tab["lo_up"][t], +1)
                hi_dn = tab["hi_dn"][t] if hi_dn is None else ctx.add(hi_dn, tab["hi_dn"][t], -1)
                hi_up = tab["hi_up"][t] if hi_up is None else ctx.add(hi_up, tab["hi_up"][t], +1)
            return lo_dn, lo_up, hi_dn, hi_up

        prev = None  # (hi_dn, hi_up) of the running maximum
        for flat_idx in order.tolist():
            lo_dn, lo_up, hi_dn, hi_up = cube(flat_idx)
            if prev is not None:
                gap_dn = ctx.sub(lo_dn, prev[1], -1)
                gap_up = ctx.sub(lo_up, prev[0], +1)
                if gap_up <= 0:
                    return SeparationResult(
                        SeparationVerdict.FAIL,
                        gap_dn,
                        total_count,
                        state.level,
                        tail,
                        "mpfr",
                    )
                if gap_dn <= 0:
                    indeterminate = True
                elif min_gap_dn is None or gap_dn < min_gap_dn:
                    min_gap_dn = gap_dn
            if prev is None or hi_up > prev[1]:
                prev = (hi_dn, hi_up)

    if indeterminate or (
        tail > 0 and min_gap_dn is not None and not min_gap_dn > widening
    ):
        verdict = SeparationVerdict.INCONCLUSIVE
    else:
        verdict = SeparationVerdict.PASS
    return SeparationResult(
        verdict, min_gap_dn, total_count, state.level, tail, "mpfr"
    )
