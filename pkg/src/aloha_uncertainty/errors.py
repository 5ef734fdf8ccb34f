"""Exception types raised across the package."""


class AlohaUncertaintyError(Exception):
    """Base class for every error raised by this package."""

    #: module that raised the error, surfaced in CLI error records
    origin = "aloha_uncertainty"


class BudgetInfeasible(AlohaUncertaintyError, ValueError):
    origin = "source"


class LoadInfeasible(AlohaUncertaintyError, ValueError):
    origin = "policy"


class DegeneratePolicy(AlohaUncertaintyError, ValueError):
    """No update from the reference node can ever be delivered."""

    origin = "analysis"


class UnreachableCondition(AlohaUncertaintyError, ValueError):
    """The requested (AoI, estimate) pair has zero probability."""

    origin = "analysis"


class SingularFundamentalMatrix(AlohaUncertaintyError, ArithmeticError):
    origin = "analysis"


class NoFeasiblePolicy(AlohaUncertaintyError, ValueError):
    origin = "optimize"


class InsufficientSamples(AlohaUncertaintyError, ValueError):
    origin = "simulate"


class ConfigError(AlohaUncertaintyError, ValueError):
    origin = "cli"
