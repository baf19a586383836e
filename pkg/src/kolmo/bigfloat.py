"""Arbitrary-precision binary floats with directed rounding.

Thin wrapper over ``gmpy2.mpfr``.  Rational town geometry never touches
this module; it exists for the places where the irrational embedding
weights 2^((p-1)/n) enter (cube images, the outer iteration), where
round-down/round-up variants keep interval bounds one-sided.
"""

from __future__ import annotations

import os
from fractions import Fraction

import gmpy2

DEFAULT_PRECISION = 256
PRECISION_ENV_VAR = "KOLMO_PRECISION"


def active_precision(override: int | None = None) -> int:
    """Precision in bits: explicit override, else $KOLMO_PRECISION, else 256."""
    if override is not None:
        return int(override)
    env = os.environ.get(PRECISION_ENV_VAR)
    if env:
        return int(env)
    return DEFAULT_PRECISION


class BigFloatContext:
    """Bundle of gmpy2 contexts at one precision: nearest / down / up."""

    def __init__(self, precision: int | None = None):
        self.precision = active_precision(precision)
        self.near = gmpy2.context(precision=self.precision)
        self.down = gmpy2.context(precision=self.precision, round=gmpy2.RoundDown)
        self.up = gmpy2.context(precision=self.precision, round=gmpy2.RoundUp)
        self._zero = gmpy2.mpfr(0)

    def _ctx(self, direction: int):
        if direction < 0:
            return self.down
        if direction > 0:
            return self.up
        return self.near

    def mpfr(self, x, direction: int = 0):
        """Convert exactly-representable input, rounding in `direction`
        (-1 down, 0 nearest, +1 up)."""
        if isinstance(x, Fraction):
            x = gmpy2.mpq(x.numerator, x.denominator)
        return self._ctx(direction).add(x, self._zero)

    def sqrt(self, x, direction: int = 0):
        if isinstance(x, Fraction):
            x = gmpy2.mpq(x.numerator, x.denominator)
        return self._ctx(direction).sqrt(x)

    def root_of_two(self, p_over_n: Fraction, direction: int = 0):
        """2**(p_over_n) with directed rounding (p_over_n a small rational)."""
        ctx = self._ctx(direction)
        exponent = self.mpfr(p_over_n, direction)
        return ctx.exp2(exponent)

    def add(self, x, y, direction: int = 0):
        return self._ctx(direction).add(x, y)

    def sub(self, x, y, direction: int = 0):
        return self._ctx(direction).sub(x, y)

    def mul(self, x, y, direction: int = 0):
        return self._ctx(direction).mul(x, y)

    def div(self, x, y, direction: int = 0):
        return self._ctx(direction).div(x, y)
