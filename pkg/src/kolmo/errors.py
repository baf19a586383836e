"""Exception hierarchy shared across the package."""


class KolmoError(Exception):
    """Base class for all package-specific errors."""


class InvariantViolation(KolmoError):
    """A structural invariant of a refinement state failed an exact check."""


class BuilderError(KolmoError):
    """The refinement step could not complete (degenerate geometry,
    exhausted perturbation budget, or an inconsistent plug system)."""


class DeeperBuildRequired(KolmoError):
    """The outer iteration needs a finer inner function than was built."""
