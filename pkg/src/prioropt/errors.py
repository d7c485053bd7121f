"""Exception types raised across the package."""


class PriorOptError(Exception):
    pass


class ZeroVector(PriorOptError, ValueError):
    pass


class DimensionExceeded(PriorOptError, ValueError):
    pass


class InfeasibleCosines(PriorOptError, ValueError):
    pass


class NonPositiveArgument(PriorOptError, ValueError):
    pass


class BudgetExhausted(PriorOptError):
    """The query ledger hit its cap; the query that would exceed it was not made."""


class NoCrossing(PriorOptError):
    """A ray never enters the adversarial region within the search range."""


class InvalidBracket(PriorOptError, ValueError):
    pass


class DegenerateBoundary(PriorOptError, ArithmeticError):
    pass


class TargetedPriorFail(PriorOptError):
    pass


class InvalidConfig(PriorOptError, ValueError):
    pass


class InvalidSpec(PriorOptError, ValueError):
    pass


class InitFailed(PriorOptError):
    pass


class BadExemplar(PriorOptError, ValueError):
    pass


class EmptySuite(PriorOptError, ValueError):
    pass


class EmptyTrace(PriorOptError, ValueError):
    pass


class ConfigError(PriorOptError, ValueError):
    """Config validation failure; ``problems`` maps field paths to messages."""

    def __init__(self, problems):
        self.problems = dict(problems)
        lines = [f"{k}: {v}" for k, v in self.problems.items()]
        super().__init__("invalid config:\n  " + "\n  ".join(lines))


class NoImprovement(PriorOptError):
    """A line search found no step that shrinks the radius; ``queries`` holds its cost."""

    def __init__(self, msg: str = "no improving step", queries: int = 0):
        super().__init__(msg)
        self.queries = queries
