"""Exception types shared across the package.

Validation problems (bad parameters, malformed files, out-of-range
queries) derive from ValueError; numerical failures (divergence,
non-convergence, degeneracy) derive from RuntimeError so callers can
distinguish "fix your input" from "the computation went wrong".
"""


class AxonwaveError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(AxonwaveError, ValueError):
    """A parameter is outside its admissible range."""


class DomainError(AxonwaveError, ValueError):
    """A coordinate query lies outside the surface domain."""


class ShapeError(AxonwaveError, ValueError):
    """An array does not match the grid it is used with."""


class FormatError(AxonwaveError, ValueError):
    """A file does not conform to its documented layout."""


class ConfigError(AxonwaveError, ValueError):
    """A run configuration is malformed or contains unknown keys."""


class SolverError(AxonwaveError, RuntimeError):
    """A numerical procedure failed to produce a usable result."""


class DivergenceError(SolverError):
    """Time integration produced non-finite values."""


class ExistenceError(SolverError):
    """No traveling front formed from the initial data."""


class FrontNotFoundError(AxonwaveError, RuntimeError):
    """No level crossing of the requested kind exists in the field."""


class DegeneracyError(SolverError):
    """An inner product or pairing degenerated below tolerance."""
