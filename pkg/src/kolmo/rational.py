"""Exact scalar arithmetic.

Two scalar kinds live here:

* ``Rational`` -- an alias for :class:`fractions.Fraction`.  Every interval
  endpoint, plateau value and radius in this package is rational, so all
  geometric predicates are decided exactly.
* ``QuadraticNumber`` -- numbers of the form ``a + b*sqrt(2)`` with rational
  ``a, b``.  The field Q(sqrt 2) is closed under ring operations and has a
  decidable sign, which is what makes the linear-candidate experiments and
  the default cube-separation check exact instead of floating point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

Rational = Fraction

_SQRT2_FLOAT = math.sqrt(2.0)


def rat(num: int, den: int = 1) -> Fraction:
    """Canonical rational ``num/den``.

    Raises ``ZeroDivisionError`` for a zero denominator; the result always
    has a positive denominator and gcd(|num|, den) == 1.
    """
    return Fraction(num, den)


def format_rational(x: Union[Fraction, int]) -> str:
    """Serialize as ``"numerator/denominator"``, e.g. ``"-2/15"``.

    The denominator is always written explicitly (``"0/1"``, ``"3/1"``) so
    that file formats stay uniform and round-trip exactly.
    """
    f = Fraction(x)
    return f"{f.numerator}/{f.denominator}"


def parse_rational(text: str) -> Fraction:
    """Parse ``"p/q"`` (or a bare integer) into an exact Fraction."""
    return Fraction(text.strip())


def _sign(x: Fraction) -> int:
    return (x > 0) - (x < 0)


@dataclass(frozen=True)
class QuadraticNumber:
    """Exact ``a + b*sqrt(2)`` with rational coefficients."""

    a: Fraction = Fraction(0)
    b: Fraction = Fraction(0)

    @staticmethod
    def of(x: Union["QuadraticNumber", Fraction, int]) -> "QuadraticNumber":
        if isinstance(x, QuadraticNumber):
            return x
        return QuadraticNumber(Fraction(x), Fraction(0))

    # -- ring operations ---------------------------------------------------

    def __add__(self, other):
        o = QuadraticNumber.of(other)
        return QuadraticNumber(self.a + o.a, self.b + o.b)

    __radd__ = __add__

    def __sub__(self, other):
        o = QuadraticNumber.of(other)
        return QuadraticNumber(self.a - o.a, self.b - o.b)

    def __rsub__(self, other):
        return QuadraticNumber.of(other) - self

    def __mul__(self, other):
        o = QuadraticNumber.of(other)
        return QuadraticNumber(
            self.a * o.a + 2 * self.b * o.b,
            self.a * o.b + self.b * o.a,
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = QuadraticNumber.of(other)
        norm = o.a * o.a - 2 * o.b * o.b
        if norm == 0:
            raise ZeroDivisionError("division by zero in Q(sqrt 2)")
        # multiply by the conjugate (o.a - o.b*sqrt2) / norm
        return QuadraticNumber(
            (self.a * o.a - 2 * self.b * o.b) / norm,
            (self.b * o.a - self.a * o.b) / norm,
        )

    def __rtruediv__(self, other):
        return QuadraticNumber.of(other) / self

    def __neg__(self):
        return QuadraticNumber(-self.a, -self.b)

    def __abs__(self):
        return -self if self.sign() < 0 else self

    # -- order -------------------------------------------------------------

    def sign(self) -> int:
        """Exact sign in {-1, 0, +1}.

        For mixed-sign coefficients the comparison reduces to ``a^2`` versus
        ``2 b^2``: the product (a + b*sqrt2)(a - b*sqrt2) = a^2 - 2 b^2 has
        the same sign as a + b*sqrt2 exactly when a > 0, and the opposite
        sign when a < 0.
        """
        sa, sb = _sign(self.a), _sign(self.b)
        if sa == 0 and sb == 0:
            return 0
        if sa >= 0 and sb >= 0:
            return 1
        if sa <= 0 and sb <= 0:
            return -1
        d = _sign(self.a * self.a - 2 * self.b * self.b)
        # a, b rational and not both zero: a^2 == 2 b^2 is impossible
        return d if sa > 0 else -d

    def __lt__(self, other):
        return (self - QuadraticNumber.of(other)).sign() < 0

    def __le__(self, other):
        return (self - QuadraticNumber.of(other)).sign() <= 0

    def __gt__(self, other):
        return (self - QuadraticNumber.of(other)).sign() > 0

    def __ge__(self, other):
        return (self - QuadraticNumber.of(other)).sign() >= 0

    def __eq__(self, other):
        if isinstance(other, (QuadraticNumber, Fraction, int)):
            o = QuadraticNumber.of(other)
            return self.a == o.a and self.b == o.b
        return NotImplemented

    def __hash__(self):
        return hash((self.a, self.b))

    # -- conversions ---------------------------------------------------------

    def is_rational(self) -> bool:
        return self.b == 0

    def __float__(self) -> float:
        return float(self.a) + float(self.b) * _SQRT2_FLOAT

    def __repr__(self) -> str:
        return f"QuadraticNumber({self.a!s} + {self.b!s}*sqrt2)"


SQRT2 = QuadraticNumber(Fraction(0), Fraction(1))
QUAD_ONE = QuadraticNumber(Fraction(1), Fraction(0))


def quad_sign(x: QuadraticNumber) -> int:
    """Exact sign of ``a + b*sqrt(2)``, computed from a, b alone."""
    return x.sign()


def quad_pair_sign(a: int, b: int) -> int:
    """Sign of ``a + b*sqrt(2)`` for plain integers; the hot-loop variant
    of :func:`quad_sign` used by the separation sweeps."""
    if a >= 0 and b >= 0:
        return 1 if (a or b) else 0
    if a <= 0 and b <= 0:
        return -1
    d = a * a - 2 * b * b
    s = (d > 0) - (d < 0)
    return s if a > 0 else -s
