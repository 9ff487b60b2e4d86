"""Exception hierarchy shared by all solver modules."""


class KellyError(Exception):
    """Base class for every error raised by this package."""


class ModelError(KellyError, ValueError):
    """Input data or model hypotheses are not satisfied."""


class NonPositiveEntry(ModelError):
    pass


class LengthMismatch(ModelError):
    pass


class TooFewOutcomes(ModelError):
    pass


class ProbabilityMassError(ModelError):
    pass


class NonPositiveWealth(ModelError):
    pass


class NotOverround(ModelError):
    pass


class NotFair(ModelError):
    pass


class NoPrefix(ModelError):
    """No index satisfies the prefix condition.

    ``all_cash`` is True when no likelihood ratio beats its threshold at all,
    in which case holding only cash is the optimizer.
    """

    def __init__(self, message: str, all_cash: bool = False):
        super().__init__(message)
        self.all_cash = all_cash


class NonUniquePrefix(ModelError):
    def __init__(self, message: str, candidates=()):
        super().__init__(message)
        self.candidates = tuple(candidates)


class DomainError(ModelError):
    pass


class OutOfRange(ModelError):
    pass


class PreconditionViolated(ModelError):
    pass


class ResolutionTooCoarse(ModelError):
    pass


class InfeasibleModel(ModelError):
    pass


class ConvergenceFailure(KellyError, RuntimeError):
    """An iterative solve hit its iteration cap or lost its bracket."""
