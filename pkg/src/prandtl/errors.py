"""Exception types shared across the package.

CLI exit-code mapping: ConfigError -> 2, NumericsError -> 3,
GuardViolation -> 4.
"""


class NumericsError(Exception):
    """A numerical procedure failed or a numerical precondition is violated."""


class ConfigError(Exception):
    """Configuration parse or validation failure."""


class NoBracket(NumericsError):
    """Shooting bracket does not straddle the far-field target."""


class StepTooLarge(NumericsError):
    """Post-solve residual check failed; the integration step is too coarse."""


class Underflow(NumericsError):
    """A quantity fell below the floor where fitted values are meaningful."""


class NonMonotone(NumericsError):
    """A mapping required to be strictly monotone is not."""


class NonMonotoneStream(NumericsError):
    """The stream coordinate psi(y) of the initial data is not increasing."""


class SolveFailed(NumericsError):
    """A linear solve failed (singular or non-finite system)."""


class NoConvergence(NumericsError):
    """Iteration exceeded its budget without meeting tolerance."""


class ZeroVector(NumericsError):
    """An operation received an identically zero vector."""


class BadProfile(NumericsError):
    """A profile table contains non-finite or inconsistent entries."""


class OutOfRange(NumericsError):
    """Evaluation point outside the tabulated range."""


class DegenerateWall(NumericsError):
    """Wall slope non-positive; the inverse transform is not invertible."""


class RangeMismatch(NumericsError):
    """Field and reference do not share a usable common range."""


class TooFewStations(NumericsError):
    """Not enough stations inside the fit window."""


class NoisyFloor(NumericsError):
    """Norms sit on the discretization floor inside the fit window."""


class GuardViolation(Exception):
    """A structural monitor failed during marching and guards are fatal.

    Carries the partial trajectory accumulated before the violation.
    """

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory
