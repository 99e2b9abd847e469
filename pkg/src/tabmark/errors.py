"""Exception hierarchy shared by every tabmark module."""


class WatermarkError(Exception):
    """Base class for all library errors."""


class ParseError(WatermarkError):
    def __init__(self, message: str, row: int | None = None, col: str | None = None):
        super().__init__(message)
        self.row = row
        self.col = col


class EmptyDataset(WatermarkError):
    pass


class ConstantColumn(WatermarkError):
    pass


class OutOfRange(WatermarkError):
    pass


class RangeError(WatermarkError):
    pass


class PlanMismatch(WatermarkError):
    pass


class ShapeMismatch(WatermarkError):
    pass


class OddColumnCount(WatermarkError):
    pass


class AllZeroImportance(WatermarkError):
    pass


class DegenerateLabel(WatermarkError):
    pass


class NonPositiveRho(WatermarkError):
    pass


class BudgetExhausted(WatermarkError):
    """Raised when a blind search runs out of queries before reaching a verdict.

    The partial report is attached so callers can still inspect what ran.
    """

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report
