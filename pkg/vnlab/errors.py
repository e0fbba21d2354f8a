"""
Errors
======
Exception hierarchy shared by every vnlab module.

Two branches carry the CLI exit code: InputError (malformed or
inconsistent input, exit 2) and ToleranceFailure (a numerical
check failed its tolerance, exit 3).
"""


class VnlabError(Exception):
    """Base class for all vnlab errors."""
    exit_code = 1


class InputError(VnlabError):
    """Raised when an input is malformed or violates a precondition."""
    exit_code = 2


class ToleranceFailure(VnlabError):
    """Raised when an internal consistency check exceeds its tolerance."""
    exit_code = 3


# Linear algebra

class NotHermitian(InputError):
    """Raised when a matrix that must be Hermitian is not."""


class DomainError(InputError):
    """Raised when a function is evaluated outside its domain."""


class ShapeMismatch(InputError):
    """Raised when matrix or subsystem dimensions do not agree."""


# Algebras and squares

class NotSubalgebra(InputError):
    """Raised when an algebra is not contained where it must be."""


class DecompositionFailed(ToleranceFailure):
    """Raised when the block decomposition cannot separate the center."""


class NotNested(InputError):
    """Raised when four algebras do not form a nested square."""


class NotCommutingSquare(InputError):
    """Raised when a commuting square is required but the expectations do not commute."""


class NotCoCommuting(InputError):
    """Raised when the commutants of a square do not form a commuting square."""


class NotFactor(InputError):
    """Raised when an algebra must have trivial center but does not."""


# Channels and operations

class SingularDefault(InputError):
    """Raised when a recovery map's default state is mapped to a singular image."""


class StepRejected(InputError):
    """Raised when a step of an operation plan fails its validity predicate."""

    def __init__(self, step: str, reason: str):
        super().__init__(f"step {step!r} rejected: {reason}")
        self.step = step
        self.reason = reason


class NotCovariant(InputError):
    """Raised when an averaging unitary does not commute with a required expectation."""

    def __init__(self, index: int, detail: str = ""):
        message = f"unitary #{index} is not covariant"
        if detail:
            message += f" ({detail})"
        super().__init__(message)
        self.index = index


class ConstraintViolated(InputError):
    """Raised when an algebra replacement breaks a named intersection/commutation constraint."""

    def __init__(self, name: str, detail: str = ""):
        message = f"constraint {name!r} violated"
        if detail:
            message += f": {detail}"
        super().__init__(message)
        self.name = name


# Measures and scenarios

class NontrivialIntersection(InputError):
    """Raised when S and T share more than the scalars."""


class WitnessUnavailable(VnlabError):
    """Raised when a value is known but no explicit witness can be built."""

    def __init__(self, value: float, reason: str = ""):
        super().__init__(f"no witness for value {value:.12g}" + (f": {reason}" if reason else ""))
        self.value = value


class NotUnbiased(InputError):
    """Raised when two bases are not mutually unbiased."""


class NotPrime(InputError):
    """Raised when a prime dimension is required."""


class MalformedGate(InputError):
    """Raised when a controlled Pauli gate specification is invalid."""
