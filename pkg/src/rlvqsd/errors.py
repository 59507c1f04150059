"""Exception types shared across the package."""


class RLVQSDError(Exception):
    """Base class for all package errors."""


class NonHermitian(RLVQSDError, ValueError):
    pass


class NonUnitary(RLVQSDError, ValueError):
    pass


class NoConvergence(RLVQSDError, ArithmeticError):
    def __init__(self, message, details=None):
        super().__init__(message)
        self.details = details


class DimensionMismatch(RLVQSDError, ValueError):
    pass


class InvalidState(RLVQSDError, ValueError):
    pass


class BadIndex(RLVQSDError, IndexError):
    pass


class BadAction(RLVQSDError, ValueError):
    pass


class UnboundParams(RLVQSDError, ValueError):
    pass


class TooDeep(RLVQSDError, ValueError):
    pass


class OutOfRange(RLVQSDError, ValueError):
    pass


class NonFiniteLoss(RLVQSDError, ArithmeticError):
    """Raised when a DDQN update produces a NaN/inf loss.

    ``dump`` carries the offending batch statistics so the caller can write
    a diagnostic file before aborting.
    """

    def __init__(self, message, dump=None):
        super().__init__(message)
        self.dump = dump or {}


class ZeroVariance(RLVQSDError, ValueError):
    pass


class LengthMismatch(RLVQSDError, ValueError):
    pass


class InsufficientData(RLVQSDError, ValueError):
    pass


class NoSuccesses(RLVQSDError, ValueError):
    pass


class MalformedLog(RLVQSDError, ValueError):
    def __init__(self, path, line_no, reason):
        super().__init__(f"{path}:{line_no}: malformed episode record ({reason})")
        self.path = path
        self.line_no = line_no


class InsufficientAnsatzes(RLVQSDError, ValueError):
    pass
