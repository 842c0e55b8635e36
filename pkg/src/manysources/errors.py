"""Exception hierarchy shared across the library and mapped to CLI exit codes.

Every library error derives from :class:`ManySourcesError` and carries the exit
code the command-line runner uses, so failure semantics are identical whether a
caller hits them through the API or the CLI.
"""

from __future__ import annotations

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_UNSUPPORTED = 3
EXIT_INSTABILITY = 4
EXIT_INSUFFICIENT_DATA = 5


class ManySourcesError(Exception):
    """Base class for all library errors."""

    exit_code: int = 1


class ConfigurationError(ManySourcesError):
    """Invalid model/regime/experiment parameters or malformed inputs.

    Covers both configuration-file problems and programmatic usage errors
    (mismatched windows, bad grids, dimension mismatches).
    """

    exit_code = EXIT_CONFIG


class UnsupportedModelError(ManySourcesError):
    """A structurally valid request the artifact deliberately does not support.

    Examples: rate functionals requiring independent increments applied to a
    renewal family, exact tilting for non-Poisson families, unclassified
    (alpha, beta) scaling combinations.
    """

    exit_code = EXIT_UNSUPPORTED


class NumericInstabilityError(ManySourcesError):
    """A numeric procedure could not certify its result.

    Examples: a concave maximization whose profile is non-concave under Monte
    Carlo noise, an unbounded Legendre maximization, exponent overflow in
    MC moment-generating-function estimation, nonpositive tail-rate probes.
    """

    exit_code = EXIT_INSTABILITY


class InsufficientDataError(ManySourcesError):
    """Not enough usable data points for the requested statistic."""

    exit_code = EXIT_INSUFFICIENT_DATA
