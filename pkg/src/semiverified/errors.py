"""Exception hierarchy shared by every layer of the package."""


class SemiVerifiedError(Exception):
    """Base class for all package errors."""


# csp-core

class SubsetViolation(SemiVerifiedError, ValueError):
    pass


class ArityMismatch(SemiVerifiedError, ValueError):
    pass


class LengthMismatch(SemiVerifiedError, ValueError):
    pass


class InvalidConstraint(SemiVerifiedError, ValueError):
    """A constraint set that allows every assignment, or malformed tuple."""


class InvariantViolation(SemiVerifiedError, RuntimeError):
    pass


# data-sim

class EmptyConstraint(SemiVerifiedError):
    """No review vector cleared the frequency threshold for a tuple.

    This is the uninformative-data signal, not a programming error.
    """

    def __init__(self, variables=(), detail=""):
        self.variables = tuple(variables)
        super().__init__(detail or f"no review vector exceeds threshold for tuple {self.variables}")


class AdversaryInfeasible(SemiVerifiedError, ValueError):
    pass


# verified-oracle

class BudgetExhausted(SemiVerifiedError):
    pass


# recovery

class RecoveryFailure(SemiVerifiedError):
    """An algorithm-level FAIL outcome.

    ``kind`` names the failure for reports, ``step`` the algorithm step
    that produced it.
    """

    kind = "RecoveryFailure"

    def __init__(self, step: str, detail: str = ""):
        self.step = step
        self.detail = detail
        super().__init__(f"{self.kind} at {step}: {detail}" if detail else f"{self.kind} at {step}")


class PhaseFail(RecoveryFailure):
    kind = "PhaseFail"


class SmallIntersectionFail(PhaseFail):
    kind = "SmallIntersectionFail"


class AscendFail(RecoveryFailure):
    kind = "AscendFail"


class AscendOverflow(RecoveryFailure):
    kind = "AscendOverflow"


class NoOptimisticFound(RecoveryFailure):
    kind = "NoOptimisticFound"


# baselines

class TooLarge(SemiVerifiedError, ValueError):
    pass


# harness

class ConfigError(SemiVerifiedError, ValueError):
    pass
