"""The interval ("town") system and its shifted families.

A refinement state is an ordered list of disjoint closed intervals in
[-1, 1], each carrying the constant value the inner function takes there.
The same base system, translated by q*epsilon for q = 0..2n, gives the
2n+1 families whose joint coverage of [0, 1] the construction maintains.

Everything here is exact: coverage minima are computed by sweeping the
finite arrangement of shifted endpoints, never by sampling.
"""

from __future__ import annotations

import json
from bisect import bisect_right
from dataclasses import InitVar, dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Literal, Sequence

from kolmo.errors import InvariantViolation
from kolmo.rational import format_rational, parse_rational

Origin = Literal["root", "split-left", "split-right", "plug"]
ORIGINS = ("root", "split-left", "split-right", "plug")


@dataclass(frozen=True)
class Town:
    """A closed interval with the constant function value it carries."""

    start: Fraction
    end: Fraction
    value: Fraction
    origin: Origin = "root"
    birth_level: int = 0

    def __post_init__(self):
        if not self.start < self.end:
            raise InvariantViolation(f"degenerate town [{self.start}, {self.end}]")

    @property
    def length(self) -> Fraction:
        return self.end - self.start

    def contains(self, x: Fraction) -> bool:
        return self.start <= x <= self.end

    def shifted(self, offset: Fraction) -> tuple[Fraction, Fraction]:
        return (self.start + offset, self.end + offset)


@dataclass(frozen=True)
class Hole:
    """An open gap between consecutive towns, with the shifted break-point
    copies that landed inside it.  ``shifted_points`` holds (p, q) pairs
    whose shifted position p - q*epsilon lies strictly inside the hole."""

    left_index: int
    left_end: Fraction
    right_end: Fraction
    shifted_points: tuple[tuple[Fraction, int], ...]

    @property
    def width(self) -> Fraction:
        return self.right_end - self.left_end


@dataclass(eq=False)
class RefinementState:
    """One level of the refinement: the towns plus the slope budget.

    Instances are treated as immutable once constructed; refinement returns
    new states.  Queries are read-only and safe to share across threads.
    """

    n: int
    epsilon: Fraction
    level: int
    towns: tuple[Town, ...]
    check: InitVar[bool] = True

    def __post_init__(self, check: bool):
        self.towns = tuple(sorted(self.towns, key=lambda t: t.start))
        if check:
            self.validate()

    @property
    def slope_cap(self) -> Fraction:
        return 1 - Fraction(1, 2**self.level)

    @property
    def families(self) -> int:
        return 2 * self.n + 1

    @cached_property
    def _starts(self) -> list[Fraction]:
        return [t.start for t in self.towns]

    @cached_property
    def max_diameter(self) -> Fraction:
        return max(t.length for t in self.towns)

    def validate(self) -> None:
        if self.n < 1:
            raise InvariantViolation("need n >= 1")
        if not (0 < self.epsilon <= Fraction(1, 2 * self.n)):
            raise InvariantViolation(
                f"epsilon {self.epsilon} outside (0, 1/{2*self.n}]"
            )
        if not self.towns:
            raise InvariantViolation("empty town list")
        if self.towns[0].start < -1 or self.towns[-1].end > 1:
            raise InvariantViolation("towns must stay inside [-1, 1]")
        cap = self.slope_cap
        for i, t in enumerate(self.towns[:-1]):
            nxt = self.towns[i + 1]
            if not t.end < nxt.start:
                raise InvariantViolation(
                    f"towns {i} and {i+1} out of order or overlapping"
                )
            if not t.value < nxt.value:
                raise InvariantViolation(
                    f"plateau values not strictly increasing at towns {i},{i+1}"
                )
            slope = (nxt.value - t.value) / (nxt.start - t.end)
            if slope > cap:
                raise InvariantViolation(
                    f"inter-town slope {slope} exceeds cap {cap} at towns {i},{i+1}"
                )

    # -- queries -------------------------------------------------------------

    def locate(self, x: Fraction):
        """Exact classification of a point against the base system.

        Returns ``("town", i)``, ``("hole", (i, i+1))`` or ``("outside", None)``.
        Closed-interval membership: endpoints count as inside.
        """
        if x < self.towns[0].start or x > self.towns[-1].end:
            return ("outside", None)
        i = bisect_right(self._starts, x) - 1
        if i >= 0 and x <= self.towns[i].end:
            return ("town", i)
        return ("hole", (i, i + 1))

    def shifted_view(self, q: int) -> list[tuple[Fraction, Fraction]]:
        """The q-th family: every town translated by q*epsilon."""
        if not 0 <= q <= 2 * self.n:
            raise ValueError(f"family index {q} outside 0..{2*self.n}")
        off = q * self.epsilon
        return [t.shifted(off) for t in self.towns]

    def coverage_count(self, x: Fraction) -> int:
        """Number of families q in 0..2n whose shifted system contains x,
        i.e. #{q : x - q*epsilon lies in some town}."""
        count = 0
        for q in range(self.families):
            kind, _ = self.locate(x - q * self.epsilon)
            if kind == "town":
                count += 1
        return count

    def missing_families(self, x: Fraction) -> list[int]:
        """Families q whose shifted system does NOT contain x."""
        out = []
        for q in range(self.families):
            kind, _ = self.locate(x - q * self.epsilon)
            if kind != "town":
                out.append(q)
        return out

    def _arrangement_points(self) -> list[Fraction]:
        pts = {Fraction(0), Fraction(1)}
        for q in range(self.families):
            off = q * self.epsilon
            for t in self.towns:
                for e in (t.start + off, t.end + off):
                    if 0 <= e <= 1:
                        pts.add(e)
        return sorted(pts)

    def min_coverage(self) -> int:
        """Exact minimum of ``coverage_count`` over all of [0, 1].

        Coverage is piecewise constant on the arrangement of all shifted
        town endpoints, so it suffices to probe every arrangement point and
        every open cell between consecutive points (at its midpoint).
        """
        cached = getattr(self, "_min_coverage", None)
        if cached is not None:
            return cached
        pts = self._arrangement_points()
        best = min(self.coverage_count(p) for p in pts)
        for a, b in zip(pts, pts[1:]):
            best = min(best, self.coverage_count((a + b) / 2))
        self._min_coverage = best
        return best

    def max_gap_families(self) -> int:
        """Largest number of families simultaneously missing a point of
        [0, 1]; the complement of ``min_coverage``."""
        return self.families - self.min_coverage()

    # -- serialization ---------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "epsilon": format_rational(self.epsilon),
            "level": self.level,
            "towns": [
                {
                    "start": format_rational(t.start),
                    "end": format_rational(t.end),
                    "value": format_rational(t.value),
                    "origin": t.origin,
                    "birth_level": t.birth_level,
                }
                for t in self.towns
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @staticmethod
    def from_dict(data: dict, check: bool = True) -> "RefinementState":
        towns = tuple(
            Town(
                start=parse_rational(t["start"]),
                end=parse_rational(t["end"]),
                value=parse_rational(t["value"]),
                origin=t["origin"],
                birth_level=int(t["birth_level"]),
            )
            for t in data["towns"]
        )
        return RefinementState(
            n=int(data["n"]),
            epsilon=parse_rational(data["epsilon"]),
            level=int(data["level"]),
            towns=towns,
            check=check,
        )

    @staticmethod
    def from_json(text: str, check: bool = True) -> "RefinementState":
        return RefinementState.from_dict(json.loads(text), check=check)
