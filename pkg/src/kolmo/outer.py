"""Outer-function iteration on top of a built inner function.

The embedding sends x in [0,1]^n to the 2n+1 values
``y_q = sum_p lambda_p * psi(x_p - q*eps)``.  Each round picks a
refinement level whose cubes are small enough for the target's modulus,
adds to every outer function a correction that is constant on each cube
image (interpolated in between), and re-measures the sup error on a grid.

Two engines share the logic: a vectorized float64 engine for the
measurement-grade rounds (error estimates live at 1e-1..1e-3 scale) and
an mpfr engine at the configured precision, which the constant-function
reproduction test exercises end to end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import gmpy2
import numpy as np

from kolmo.bigfloat import BigFloatContext, active_precision
from kolmo.errors import DeeperBuildRequired, KolmoError
from kolmo.pwl import PiecewiseLinear
from kolmo.rational import parse_rational
from kolmo.towns import RefinementState

# ---------------------------------------------------------------------------
# test functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FunctionSpec:
    """A target function with the modulus knowledge the rounds need."""

    name: str
    lipschitz: float
    array_call: Callable  # (m, n) float array -> (m,) floats
    scalar_call: Callable  # sequence of scalars (mpfr ok) -> scalar


def _const_spec(value: str) -> FunctionSpec:
    c = parse_rational(value)
    cf = float(c)

    def arr(x):
        return np.full(x.shape[0], cf)

    def scal(coords, ctx=None):
        if ctx is not None:
            return ctx.mpfr(c)
        return cf

    return FunctionSpec(f"const:{c}", 0.0, arr, scal)


def _sum_spec() -> FunctionSpec:
    def arr(x):
        return x.sum(axis=1)

    def scal(coords, ctx=None):
        total = coords[0]
        for c in coords[1:]:
            total = total + c
        return total

    return FunctionSpec("sum", 2.0, arr, scal)


def _product_spec() -> FunctionSpec:
    def arr(x):
        return np.prod(x, axis=1)

    def scal(coords, ctx=None):
        total = coords[0]
        for c in coords[1:]:
            total = total * c
        return total

    return FunctionSpec("product", 2.0, arr, scal)


def _runge2d_spec() -> FunctionSpec:
    def arr(x):
        return 1.0 / (1.0 + 25.0 * (x * x).sum(axis=1))

    def scal(coords, ctx=None):
        r2 = sum(c * c for c in coords)
        return 1 / (1 + 25 * r2)

    return FunctionSpec("runge2d", 3.3, arr, scal)


def parse_function(spec: str) -> FunctionSpec:
    """Registry lookup: ``const:c``, ``sum``, ``product``, ``runge2d``."""
    if spec.startswith("const:"):
        return _const_spec(spec.split(":", 1)[1])
    table = {
        "sum": _sum_spec,
        "product": _product_spec,
        "runge2d": _runge2d_spec,
    }
    if spec not in table:
        raise KolmoError(f"unknown test function {spec!r}")
    return table[spec]()


# ---------------------------------------------------------------------------
# embedding
# ---------------------------------------------------------------------------


class Embedding:
    """The inner map y_q(x) = sum_p lambda_p psi(x_p - q*eps), with weights
    lambda_p = 2^((p-1)/n), over the deepest built inner function."""

    def __init__(
        self,
        n: int,
        epsilon: Fraction,
        psi: PiecewiseLinear,
        tail: Fraction = Fraction(0),
        precision: int | None = None,
    ):
        self.n = n
        self.epsilon = epsilon
        self.psi = psi
        self.tail = tail
        self.precision = active_precision(precision)
        self.ctx = BigFloatContext(self.precision)
        # float64 kernel
        self.kx = np.array([float(x) for x in psi.xs])
        self.ky = np.array([float(y) for y in psi.ys])
        self.lambdas_f = np.array([2.0 ** (p / n) for p in range(n)])
        self.eps_f = float(epsilon)
        # mpfr kernel (exact conversions, nearest rounding)
        self.kx_big = [self.ctx.mpfr(x) for x in psi.xs]
        self.ky_big = [self.ctx.mpfr(y) for y in psi.ys]
        self.lambdas_big = [
            self.ctx.root_of_two(Fraction(p, n)) for p in range(n)
        ]
        self.eps_big = self.ctx.mpfr(epsilon)

    @classmethod
    def from_states(
        cls,
        states: Sequence[RefinementState],
        tail: Fraction | None = None,
        precision: int | None = None,
    ) -> "Embedding":
        from kolmo.verify import tail_bound

        deepest = states[-1]
        return cls(
            n=deepest.n,
            epsilon=deepest.epsilon,
            psi=PiecewiseLinear.from_state(deepest),
            tail=tail_bound(deepest) if tail is None else tail,
            precision=precision,
        )

    # -- float engine ------------------------------------------------------

    def psi_vec(self, xs: np.ndarray, shift: float) -> np.ndarray:
        return np.interp(xs - shift, self.kx, self.ky)

    def big_psi_vec(self, x: np.ndarray, q: int) -> np.ndarray:
        """Embedding values for a batch of points, float64."""
        shift = q * self.eps_f
        acc = self.lambdas_f[0] * self.psi_vec(x[:, 0], shift)
        for p in range(1, self.n):
            acc = acc + self.lambdas_f[p] * self.psi_vec(x[:, p], shift)
        return acc

    # -- mpfr engine ---------------------------------------------------------

    def psi_big(self, x, q: int):
        """psi(x - q*eps) at working precision."""
        ctx = self.ctx
        y = ctx.sub(x, ctx.mul(ctx.mpfr(q), self.eps_big))
        xs, ys = self.kx_big, self.ky_big
        if y <= xs[0]:
            return ys[0]
        if y >= xs[-1]:
            return ys[-1]
        from bisect import bisect_right

        i = bisect_right(xs, y) - 1
        x0, x1 = xs[i], xs[i + 1]
        y0, y1 = ys[i], ys[i + 1]
        if y == x0:
            return y0
        t = ctx.div(ctx.sub(y, x0), ctx.sub(x1, x0))
        return ctx.add(y0, ctx.mul(ctx.sub(y1, y0), t))

    def big_psi(self, q: int, x: Sequence) -> gmpy2.mpfr:
        """sum_p lambda_p * psi(x_p - q*eps) at working precision."""
        if not 0 <= q <= 2 * self.n:
            raise ValueError(f"family index {q} outside 0..{2*self.n}")
        ctx = self.ctx
        coords = [
            xi if isinstance(xi, gmpy2.mpfr) else ctx.mpfr(xi) for xi in x
        ]
        total = ctx.mpfr(0)
        for p, xi in enumerate(coords):
            total = ctx.add(total, ctx.mul(self.lambdas_big[p], self.psi_big(xi, q)))
        return total


def big_psi(e: Embedding, q: int, x: Sequence) -> gmpy2.mpfr:
    """Module-level convenience wrapper for :meth:`Embedding.big_psi`."""
    return e.big_psi(q, x)


def cube_image(e: Embedding, q: int, towns) -> tuple:
    """Image interval of a product of towns under the q-th embedding,
    widened by n * ||lambda||_1 * tail (mpfr endpoints, outward rounding)."""
    ctx = e.ctx
    lo = ctx.mpfr(0)
    hi = ctx.mpfr(0)
    for p, t in enumerate(towns):
        lam_dn = e.ctx.root_of_two(Fraction(p, e.n), -1)
        lam_up = e.ctx.root_of_two(Fraction(p, e.n), +1)
        lo = ctx.add(lo, ctx.mul(lam_dn, ctx.mpfr(e.psi.eval(t.start), -1), -1), -1)
        hi = ctx.add(hi, ctx.mul(lam_up, ctx.mpfr(e.psi.eval(t.end), +1), +1), +1)
    norm1 = ctx.mpfr(0)
    for p in range(e.n):
        norm1 = ctx.add(norm1, e.ctx.root_of_two(Fraction(p, e.n), +1), +1)
    pad = ctx.mul(ctx.mul(norm1, ctx.mpfr(e.tail, +1), +1), ctx.mpfr(e.n), +1)
    return (ctx.sub(lo, pad, -1), ctx.add(hi, pad, +1))


# ---------------------------------------------------------------------------
# outer state
# ---------------------------------------------------------------------------


@dataclass
class RoundDelta:
    """One round's per-family corrections: constant on each cube image,
    linearly interpolated between image anchor points."""

    level: int
    per_q: list  # entries ("const", c) or ("knots", ys, cs)

    def eval_vec(self, q: int, ys: np.ndarray) -> np.ndarray:
        kind = self.per_q[q]
        if kind[0] == "const":
            return np.full(ys.shape, float(kind[1]))
        _, ky, kc = kind
        return np.interp(ys, ky, kc)

    def eval_big(self, q: int, y, ctx: BigFloatContext):
        kind = self.per_q[q]
        if kind[0] == "const":
            return kind[1]
        _, ky, kc = kind
        from bisect import bisect_right

        if y <= ky[0]:
            return kc[0]
        if y >= ky[-1]:
            return kc[-1]
        i = bisect_right(ky, y) - 1
        if y == ky[i]:
            return kc[i]
        t = ctx.div(ctx.sub(y, ky[i]), ctx.sub(ky[i + 1], ky[i]))
        return ctx.add(kc[i], ctx.mul(ctx.sub(kc[i + 1], kc[i]), t))


@dataclass
class OuterState:
    """Accumulated outer functions after some rounds, as a stack of
    per-round deltas, plus the current grid-measured sup-error estimate."""

    round_index: int = 0
    rounds: list[RoundDelta] = field(default_factory=list)
    m_estimate: object = None
    history: list[tuple[int, int, float]] = field(default_factory=list)

    @property
    def chi_knot_counts(self) -> list[int]:
        counts = []
        if not self.rounds:
            return counts
        q_count = len(self.rounds[0].per_q)
        for q in range(q_count):
            total = 0
            for rd in self.rounds:
                kind = rd.per_q[q]
                total += 1 if kind[0] == "const" else len(kind[1])
            counts.append(total)
        return counts

    def chi_as_pwl(self, q: int, lo: float, hi: float, samples: int = 2049):
        """Materialize the accumulated outer function for family q as a
        float piecewise-linear table (for export/plotting)."""
        ys = np.linspace(lo, hi, samples)
        acc = np.zeros_like(ys)
        for rd in self.rounds:
            acc = acc + rd.eval_vec(q, ys)
        return PiecewiseLinear(list(zip(ys.tolist(), acc.tolist())))


# ---------------------------------------------------------------------------
# the round
# ---------------------------------------------------------------------------


def _grid_points(g: int, n: int) -> np.ndarray:
    axes = [np.linspace(0.0, 1.0, g)] * n
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def eval_outer_vec(e: Embedding, outer: OuterState, x: np.ndarray) -> np.ndarray:
    """f_r at a batch of points (float64 engine)."""
    acc = np.zeros(x.shape[0])
    if not outer.rounds:
        return acc
    for q in range(2 * e.n + 1):
        ys = e.big_psi_vec(x, q)
        for rd in outer.rounds:
            acc = acc + rd.eval_vec(q, ys)
    return acc


def kr_eval(e: Embedding, outer: OuterState, x: Sequence) -> gmpy2.mpfr:
    """f_r at one point, at working precision."""
    ctx = e.ctx
    total = ctx.mpfr(0)
    for q in range(2 * e.n + 1):
        y = e.big_psi(q, x)
        for rd in outer.rounds:
            total = ctx.add(total, rd.eval_big(q, y, ctx))
    return total


def measure_error(
    f: FunctionSpec,
    e: Embedding,
    outer: OuterState,
    grid: int,
    engine: str = "float",
):
    """Grid sup-norm estimate of f - f_r (labeled estimate, not a proof)."""
    if engine == "float":
        x = _grid_points(grid, e.n)
        return float(np.max(np.abs(f.array_call(x) - eval_outer_vec(e, outer, x))))
    ctx = e.ctx
    step = Fraction(1, grid - 1)
    worst = ctx.mpfr(0)
    coords_1d = [ctx.mpfr(i * step) for i in range(grid)]
    import itertools

    for pt in itertools.product(coords_1d, repeat=e.n):
        err = abs(ctx.sub(f.scalar_call(pt, ctx), kr_eval(e, outer, pt)))
        if err > worst:
            worst = err
    return worst


def select_level(
    f: FunctionSpec,
    states: Sequence[RefinementState],
    usable_levels: Sequence[int],
    m_prev: float,
    round_index: int,
    n: int,
    prev_level: int | None = None,
) -> int:
    """Refinement level for the next round.

    The oscillation budget asks for the smallest usable level with
    (L_f + L_prev) * D * sqrt(n) <= M_prev / (2n+2), where L_prev is 0 for
    the first round (the zero function) and the target's own constant
    afterwards.  Rounds after the first always advance the level, by at
    most two steps per round: each round must out-resolve the structure
    the previous correction layer introduced at its own scale, and level
    revisits measurably stall (the correction anchors of a revisited level
    carry no new information).
    """
    l_prev = 0.0 if round_index == 1 else f.lipschitz
    denom = (f.lipschitz + l_prev) * math.sqrt(n) * (2 * n + 2)
    usable = sorted(usable_levels)
    if denom == 0:
        budget_level = usable[0]
    else:
        d_req = float(m_prev) / denom
        budget_level = next(
            (j for j in usable if float(states[j].max_diameter) <= d_req),
            None,
        )
    if prev_level is None:
        if budget_level is None:
            raise DeeperBuildRequired(
                f"round {round_index}: no built level meets the oscillation "
                f"budget; build psi deeper"
            )
        return budget_level
    lo = prev_level + 1
    hi = prev_level + 2
    j = hi if budget_level is None else min(max(budget_level, lo), hi)
    if j not in usable:
        raise DeeperBuildRequired(
            f"round {round_index}: next level {j} exceeds the deepest "
            f"usable level {usable[-1]}; build psi deeper"
        )
    return j


def outer_round(
    f: FunctionSpec,
    e: Embedding,
    outer: OuterState,
    states: Sequence[RefinementState],
    usable_levels: Sequence[int],
    grid: int = 101,
    engine: str = "float",
) -> OuterState:
    """One correction round; returns the extended outer state."""
    r = outer.round_index + 1
    if outer.m_estimate is None:
        outer.m_estimate = measure_error(f, e, outer, grid, engine)
    m_prev = outer.m_estimate
    prev_level = outer.rounds[-1].level if outer.rounds else None
    j = select_level(f, states, usable_levels, float(m_prev), r, e.n, prev_level)
    state = states[j]
    if state.min_coverage() < 2 * state.n:
        raise KolmoError(f"level {j} lost the coverage property")

    cap = float(m_prev) / (2 * e.n + 1)
    ctx = e.ctx
    per_q = []
    for q in range(2 * e.n + 1):
        if engine == "float":
            per_q.append(_family_delta_float(f, e, outer, state, q, cap))
        else:
            per_q.append(_family_delta_big(f, e, outer, state, q, ctx, m_prev))
    delta = RoundDelta(level=j, per_q=per_q)

    new = OuterState(
        round_index=r,
        rounds=outer.rounds + [delta],
        m_estimate=None,
        history=list(outer.history),
    )
    new.m_estimate = measure_error(f, e, new, grid, engine)
    new.history.append((r, j, float(new.m_estimate)))
    return new


def _level_tables(e: Embedding, state: RefinementState):
    """Float tables per level: town walls plus the midpoint of the deep
    function's value range on each town (the best single anchor for where
    the embedding actually sends the town's points)."""
    key = state.level
    cache = getattr(e, "_tables", None)
    if cache is None:
        cache = {}
        e._tables = cache
    if key not in cache:
        starts = np.array([float(t.start) for t in state.towns])
        ends = np.array([float(t.end) for t in state.towns])
        vmid = np.array(
            [
                (float(e.psi.eval(t.start)) + float(e.psi.eval(t.end))) / 2.0
                for t in state.towns
            ]
        )
        cache[key] = (starts, ends, vmid)
    return cache[key]


def _family_delta_float(
    f: FunctionSpec,
    e: Embedding,
    outer: OuterState,
    state: RefinementState,
    q: int,
    cap: float,
):
    starts, ends, vmid = _level_tables(e, state)
    off = q * e.eps_f
    mask = (starts + off <= 1.0) & (ends + off >= 0.0)
    idx = np.where(mask)[0]
    v = vmid[idx]
    centers = (
        np.maximum(starts[idx] + off, 0.0) + np.minimum(ends[idx] + off, 1.0)
    ) / 2.0

    # image anchor of each cube: sum_p lambda_p * value
    points = e.lambdas_f[0] * v
    for p in range(1, e.n):
        points = np.add.outer(points, e.lambdas_f[p] * v)
    points = points.ravel()

    mesh = np.meshgrid(*([centers] * e.n), indexing="ij")
    xi = np.stack([m.ravel() for m in mesh], axis=1)
    resid = f.array_call(xi) - eval_outer_vec(e, outer, xi)
    c = np.clip(resid / (2 * e.n + 1), -cap, cap)

    order = np.argsort(points, kind="stable")
    ys = points[order]
    cs = c[order]
    # merge duplicate anchors (float ties): keep group means
    keep = np.empty(ys.shape, dtype=bool)
    keep[0] = True
    np.not_equal(ys[1:], ys[:-1], out=keep[1:])
    if not keep.all():
        groups = np.cumsum(keep) - 1
        sums = np.bincount(groups, weights=cs)
        counts = np.bincount(groups)
        ys = ys[keep]
        cs = sums / counts
    if cs.size == 1 or np.all(cs == cs[0]):
        return ("const", float(cs[0]))
    return ("knots", ys, cs)


def _family_delta_big(
    f: FunctionSpec,
    e: Embedding,
    outer: OuterState,
    state: RefinementState,
    q: int,
    ctx: BigFloatContext,
    m_prev,
):
    import itertools

    towns = state.towns
    off = Fraction(q) * state.epsilon
    eligible = [
        i
        for i, t in enumerate(towns)
        if t.start + off <= 1 and t.end + off >= 0
    ]
    cap = ctx.div(ctx.mpfr(m_prev), ctx.mpfr(2 * e.n + 1))
    entries = []
    for combo in itertools.product(eligible, repeat=e.n):
        anchor = ctx.mpfr(0)
        xi = []
        for p, i in enumerate(combo):
            t = towns[i]
            vmid = (e.psi.eval(t.start) + e.psi.eval(t.end)) / 2
            anchor = ctx.add(anchor, ctx.mul(e.lambdas_big[p], ctx.mpfr(vmid)))
            lo = max(t.start + off, Fraction(0))
            hi = min(t.end + off, Fraction(1))
            xi.append(ctx.mpfr((lo + hi) / 2))
        resid = ctx.sub(f.scalar_call(xi, ctx), kr_eval(e, outer, xi))
        c = ctx.div(resid, ctx.mpfr(2 * e.n + 1))
        if c > cap:
            c = cap
        elif c < -cap:
            c = -cap
        entries.append((anchor, c))
    entries.sort(key=lambda ac: ac[0])
    ys = [a for a, _ in entries]
    cs = [c for _, c in entries]
    if all(c == cs[0] for c in cs):
        return ("const", cs[0])
    return ("knots", ys, cs)


def decompose(
    f: FunctionSpec,
    states: Sequence[RefinementState],
    rounds: int,
    usable_levels: Sequence[int] | None = None,
    grid: int = 101,
    precision: int | None = None,
    engine: str | None = None,
    tail: Fraction | None = None,
) -> tuple[OuterState, Embedding]:
    """Run outer rounds against a built inner function.

    ``usable_levels`` should list levels whose cube-image separation has
    been verified; it defaults to all built levels.  Raises
    DeeperBuildRequired when no usable level meets a round's oscillation
    budget.
    """
    if usable_levels is None:
        usable_levels = list(range(len(states)))
    if engine is None:
        # the mpfr engine costs O(cubes * grid^n) big-float operations, so
        # it is reserved for modulus-zero targets (constants), where exact
        # reproduction is the point and the cube count is 1 per family;
        # everything else runs the measurement-grade float engine
        engine = "big" if f.lipschitz == 0 else "float"
    e = Embedding.from_states(states, tail=tail, precision=precision)
    outer = OuterState()
    for _ in range(rounds):
        outer = outer_round(f, e, outer, states, usable_levels, grid, engine)
    return outer, e
