"""Exception hierarchy shared by all modules."""


class LongFairError(Exception):
    """Base class for every error raised by this package."""


class InvalidKernel(LongFairError, ValueError):
    pass


class NegativeEntry(InvalidKernel):
    def __init__(self, row, col, value):
        self.row, self.col, self.value = row, col, value
        super().__init__(f"negative entry {value!r} at ({row}, {col})")


class RowSumViolation(InvalidKernel):
    def __init__(self, row, total):
        self.row, self.total = row, total
        super().__init__(f"row {row} sums to {total!r}, expected 1")


class InvalidDistribution(LongFairError, ValueError):
    pass


class DimensionMismatch(LongFairError, ValueError):
    pass


class NotConvergent(LongFairError):
    """Kernel fails the irreducibility or aperiodicity certificate."""


class NumericalFailure(LongFairError, ArithmeticError):
    pass


class UnknownPreset(LongFairError, KeyError):
    pass


class SchemaError(LongFairError, ValueError):
    pass


class InvariantViolation(LongFairError, ValueError):
    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


class WrongVariant(LongFairError, TypeError):
    pass


class DegenerateGroup(LongFairError, ZeroDivisionError):
    def __init__(self, group, denominator):
        self.group, self.denominator = group, denominator
        super().__init__(f"group {group} has no qualified mass (denominator {denominator:.3e})")


class EmptyDataset(LongFairError, ValueError):
    pass


class EmptyQualifiedGroup(UserWarning):
    """Emitted when a group has no positive labels and the fairness penalty is skipped."""
