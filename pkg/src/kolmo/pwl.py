"""Piecewise-linear functions over exact (or big-float) scalars.

The one concrete function shape the whole package needs: ascending knots,
linear interpolation between them, constant extension beyond the outermost
knots.  Knot ordinates may be Fractions, QuadraticNumbers or mpfr values;
evaluation and norms stay in whatever arithmetic the knots carry.
"""

from __future__ import annotations

from bisect import bisect_right
from fractions import Fraction
from typing import Iterable, Sequence

from kolmo.towns import RefinementState


class PiecewiseLinear:
    """Continuous piecewise-linear function given by its knot list."""

    __slots__ = ("xs", "ys")

    def __init__(self, knots: Iterable[tuple]):
        xs, ys = [], []
        for x, y in knots:
            xs.append(x)
            ys.append(y)
        if not xs:
            raise ValueError("need at least one knot")
        for a, b in zip(xs, xs[1:]):
            if not a < b:
                raise ValueError("knot abscissae must be strictly increasing")
        self.xs = xs
        self.ys = ys

    @classmethod
    def from_state(cls, state: RefinementState) -> "PiecewiseLinear":
        """The level function of a refinement state: constant on towns,
        linear across the gaps between them."""
        knots = []
        for t in state.towns:
            knots.append((t.start, t.value))
            knots.append((t.end, t.value))
        return cls(knots)

    @classmethod
    def constant(cls, lo, hi, value) -> "PiecewiseLinear":
        return cls([(lo, value), (hi, value)])

    @property
    def domain(self) -> tuple:
        return (self.xs[0], self.xs[-1])

    def knots(self) -> list[tuple]:
        return list(zip(self.xs, self.ys))

    def eval(self, x):
        """Exact interpolation; constant beyond the outermost knots."""
        xs, ys = self.xs, self.ys
        if x <= xs[0]:
            return ys[0]
        if x >= xs[-1]:
            return ys[-1]
        i = bisect_right(xs, x) - 1
        x0, x1 = xs[i], xs[i + 1]
        y0, y1 = ys[i], ys[i + 1]
        if x == x0:
            return y0
        return y0 + (y1 - y0) * (x - x0) / (x1 - x0)

    __call__ = eval

    def segment_slopes(self) -> list:
        return [
            (y1 - y0) / (x1 - x0)
            for (x0, x1, y0, y1) in zip(self.xs, self.xs[1:], self.ys, self.ys[1:])
        ]

    def lipschitz_constant(self):
        """Max absolute segment slope (0 for a constant function)."""
        slopes = self.segment_slopes()
        if not slopes:
            return Fraction(0)
        best = abs(slopes[0])
        for s in slopes[1:]:
            a = abs(s)
            if a > best:
                best = a
        return best

    def is_non_decreasing(self) -> bool:
        return all(y1 >= y0 for y0, y1 in zip(self.ys, self.ys[1:]))

    def sup_diff(self, other: "PiecewiseLinear"):
        """Exact sup norm of (self - other) over the union of the domains.

        The difference is piecewise linear on the merged knot set, so its
        maximum absolute value is attained at a merged knot.
        """
        merged = sorted(set(self.xs) | set(other.xs))
        best = None
        for x in merged:
            d = abs(self.eval(x) - other.eval(x))
            if best is None or d > best:
                best = d
        return best

    def knots_dict(self) -> dict:
        """Exact JSON-ready knot dump (rational knots only)."""
        from kolmo.rational import format_rational

        return {
            "knots": [
                [format_rational(x), format_rational(y)]
                for x, y in zip(self.xs, self.ys)
            ]
        }
