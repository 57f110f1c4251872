"""Exception hierarchy.

Every error carries the name of the module that raised it and, where one
exists, a remedy hint. The CLI prints both and maps the class to an exit code.
"""


class FuzzyDidError(Exception):
    module = "fuzzydid"

    def __init__(self, message, hint=None):
        super().__init__(message)
        self.hint = hint


class SchemaError(FuzzyDidError):
    """Missing column, unparsable value or empty input file."""

    module = "dataset"


class DesignError(FuzzyDidError):
    """The data do not satisfy a design requirement (first stage, group labels)."""

    module = "dataset"


class MissingCellError(DesignError):
    def __init__(self, cell, message=None, hint=None):
        self.cell = cell
        if message is None:
            names = ("d", "g", "t") if len(cell) == 3 else ("g", "t")
            label = ", ".join(f"{k}={v}" for k, v in zip(names, cell))
            message = f"cell ({label}) has no observations"
        super().__init__(message, hint)


class WeakDesignError(FuzzyDidError):
    """Denominator of a Wald ratio is numerically zero."""

    module = "estimators"


class UnstableControlError(FuzzyDidError):
    module = "estimators"

    def __init__(self, message, hint="use `bounds` (tc_bounds / cic_bounds) for partial identification"):
        super().__init__(message, hint)


class UnboundedSupportError(FuzzyDidError):
    module = "empirical"


class BoundsError(FuzzyDidError):
    module = "bounds"


class SupergroupError(FuzzyDidError):
    module = "multigroup"


class DensityFloorError(FuzzyDidError):
    module = "inference"

    def __init__(self, message, hint="use bootstrap inference instead of the analytic standard error"):
        super().__init__(message, hint)


class BootstrapError(FuzzyDidError):
    module = "inference"

    def __init__(self, message, census=None, hint=None):
        super().__init__(message, hint)
        self.census = census or {}


class ConfigError(FuzzyDidError):
    module = "simulate"
