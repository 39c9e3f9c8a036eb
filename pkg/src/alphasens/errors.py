"""Exception hierarchy.

Validation errors (bad input, bad files) and numerical failures are kept in
separate branches so the command line can map them to distinct exit codes.
"""


class AlphaSensError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(AlphaSensError, ValueError):
    pass


class NumericalError(AlphaSensError, ArithmeticError):
    pass


class NonFinite(ValidationError):
    pass


class ConstantColumn(ValidationError):
    def __init__(self, column, name=None):
        self.column = column
        label = f"{column}" if name is None else f"{column} ({name})"
        super().__init__(f"feature column {label} has zero variance")


class DegenerateTarget(ValidationError):
    pass


class EmptyInput(ValidationError):
    pass


class NegativeValue(ValidationError):
    pass


class IndexOutOfRange(ValidationError, IndexError):
    pass


class DimensionMismatch(ValidationError):
    pass


class SchemaError(ValidationError):
    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


class MissingTarget(ValidationError):
    pass


class NonPositiveScale(ValidationError):
    pass


class GridMismatch(ValidationError):
    pass


class SingularPoint(ValidationError):
    def __init__(self, sample, feature):
        self.sample = sample
        self.feature = feature
        super().__init__(
            f"derivative unbounded at sample {sample}, feature {feature}")


class TooLarge(ValidationError):
    pass


class DivergedTraining(NumericalError):
    def __init__(self, epoch):
        self.epoch = epoch
        super().__init__(f"training loss became non-finite at epoch {epoch}")


class OracleMismatch(NumericalError):
    pass
