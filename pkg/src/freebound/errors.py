"""Exception hierarchy shared by all modules.

Every error raised on purpose by the package derives from
:class:`FreeBoundaryError`, so the CLI can turn any of them into a
machine-readable error document.
"""


class FreeBoundaryError(Exception):
    """Base class for all package errors."""


# nonlin
class EvaluationDomain(FreeBoundaryError, ValueError):
    pass


class NoRoot(FreeBoundaryError, ValueError):
    pass


class DomainViolation(FreeBoundaryError, ValueError):
    pass


class NegativeMass(FreeBoundaryError, ValueError):
    pass


# wave
class NoConnection(FreeBoundaryError, RuntimeError):
    """The phase-plane trajectory turned back before reaching the interface level."""

    def __init__(self, message, speed=None, turning_level=None):
        super().__init__(message)
        self.speed = speed
        self.turning_level = turning_level


class NoBracket(FreeBoundaryError, RuntimeError):
    pass


class SingularSlope(FreeBoundaryError, ValueError):
    pass


# fbpde
class BadInitialData(FreeBoundaryError, ValueError):
    pass


class CflViolation(FreeBoundaryError, RuntimeError):
    pass


class Blowup(FreeBoundaryError, RuntimeError):
    """Raised when a field leaves its admissible range.

    ``trajectory`` and ``snapshots`` carry whatever was recorded before the
    failure so callers can still inspect the partial run.
    """

    def __init__(self, message, trajectory=None, snapshots=None):
        super().__init__(message)
        self.trajectory = trajectory
        self.snapshots = snapshots


# asymptotics
class TooShort(FreeBoundaryError, ValueError):
    pass


# comparison
class ConstraintViolation(FreeBoundaryError, ValueError):
    pass


class Infeasible(FreeBoundaryError, ValueError):
    def __init__(self, message, constraint=None):
        super().__init__(message)
        self.constraint = constraint


class BadOrdering(FreeBoundaryError, ValueError):
    pass


class NoSolution(FreeBoundaryError, RuntimeError):
    pass


# cli
class ParseError(FreeBoundaryError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class UnknownKey(ParseError):
    pass


class RangeError(ParseError):
    pass
