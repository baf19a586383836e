"""Exact construction of a Lipschitz-1 inner function for Kolmogorov
superposition representations, plus the machinery around it: mechanical
verification of the separation/coverage/slope conditions, an iterative
outer-function builder, and an exact Q(sqrt 2) lab reproducing why the
obvious linear inner candidate fails.
"""

from kolmo.rational import Rational, rat, QuadraticNumber, quad_sign
from kolmo.towns import Town, RefinementState, Hole
from kolmo.builder import build, refine
from kolmo.pwl import PiecewiseLinear

__version__ = "0.1.0"

__all__ = [
    "Rational",
    "rat",
    "QuadraticNumber",
    "quad_sign",
    "Town",
    "RefinementState",
    "Hole",
    "build",
    "refine",
    "PiecewiseLinear",
    "__version__",
]
