"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class ContractError(ValueError):
    """A precondition of an operation was violated."""


class PlanError(ValueError):
    """Invalid partial-sharing plan or a sequence too short for it."""


class ConfigError(ValueError):
    """Invalid run configuration. Carries the offending key and line when known."""

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = ""
        if key is not None:
            where = f"[{key}]"
            if line is not None:
                where += f" (line {line})"
            where += ": "
        super().__init__(where + message)


class IngestionError(ValueError):
    """A data record could not be ingested."""

    def __init__(self, message, field=None, feature_id=None, line=None):
        self.field = field
        self.feature_id = feature_id
        self.line = line
        super().__init__(message)


class FunnelError(IngestionError):
    """A second-task positive appeared without a click."""


class UndefinedMetricError(ValueError):
    """AUC requested on a single-class score set."""


class NumericalError(FloatingPointError):
    """Training produced a non-finite loss."""
