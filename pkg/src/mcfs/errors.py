"""Exception taxonomy shared by the library and the command line tool.

Every failure mode maps onto one of three CLI exit codes: invalid input
(exit 2), numerical failure (exit 3), and violated mathematical property
(exit 1).  Library code raises the most specific class available; the CLI
translates via ``exit_code``.
"""

from __future__ import annotations


class McfsError(Exception):
    """Base class for all package errors."""

    exit_code = 3


class InvalidInputError(McfsError):
    """The request itself is malformed: bad shapes, bad signs, bad domain."""

    exit_code = 2


class UnsupportedFeedbackSignError(InvalidInputError):
    """The product of feedback signs is +1; only negative loops are handled."""


class NotInDomainError(InvalidInputError):
    """A vector has a thresholded-zero coordinate where none is allowed."""


class NumericalError(McfsError):
    """A numerical procedure failed to produce a trustworthy answer."""

    exit_code = 3


class DivergenceError(NumericalError):
    """A trajectory left every bounded region before the horizon."""


class DegeneracyError(NumericalError):
    """An intermediate quantity underflowed or collapsed below resolution."""


class NotFoundError(NumericalError):
    """An iterative search (root, orbit, period) did not converge."""


class SpectralGapError(NumericalError):
    """Adjacent modulus clusters are too close to separate reliably."""


class ConeConsistencyError(McfsError):
    """A computed object violates a cone or signature property it must satisfy."""

    exit_code = 1


class NotConnectedError(McfsError):
    """A candidate trajectory failed to approach its target set."""

    exit_code = 1

    def __init__(self, message: str, trajectory=None) -> None:
        super().__init__(message)
        self.trajectory = trajectory


class InconclusiveError(McfsError):
    """The data does not support any verdict at the requested tolerances."""

    exit_code = 3
