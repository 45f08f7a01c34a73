"""Exception hierarchy for coopobs."""


class CoopObsError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(CoopObsError, ValueError):
    pass


class OddLength(CoopObsError, ValueError):
    pass


class WindowTooShort(CoopObsError, ValueError):
    pass


class NotMMatrix(CoopObsError, ValueError):
    pass


class NotDiagonalizable(CoopObsError, ValueError):
    pass


class SynthesisFailed(CoopObsError, RuntimeError):
    pass


class CertificationFailed(CoopObsError, RuntimeError):
    pass


class SingularMass(CoopObsError, ValueError):
    pass


class MissingPilot(CoopObsError, ValueError):
    pass


class NonPositiveSeries(CoopObsError, ValueError):
    pass


class NonFiniteState(CoopObsError, FloatingPointError):
    """Integration produced a non-finite state (the run diverged)."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class PreconditionFailed(CoopObsError, ValueError):
    """A hypothesis of a stability harness does not hold.

    ``hypothesis`` names the violated condition.
    """

    def __init__(self, hypothesis, detail=""):
        msg = f"precondition failed: {hypothesis}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
        self.hypothesis = hypothesis


class RiccatiFailed(CoopObsError, RuntimeError):
    pass


class ParseError(CoopObsError, ValueError):
    pass


class ValidationError(CoopObsError, ValueError):
    """Configuration failed validation.

    ``errors`` is a list of ``(field_path, message)`` pairs covering every
    violated invariant, not just the first one.
    """

    def __init__(self, errors):
        self.errors = list(errors)
        lines = [f"{path}: {msg}" for path, msg in self.errors]
        super().__init__("invalid configuration:\n  " + "\n  ".join(lines))


ConfigInvalid = ValidationError


class IoError(CoopObsError, OSError):
    """An output file could not be written."""
