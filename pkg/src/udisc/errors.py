"""Exception types shared across the package.

Grouped here because several of them (DimensionMismatch, SingularSystem)
are raised from more than one module. All user-input problems derive from
UdiscError so the CLI can map them to exit code 1; numeric failures
(SingularSystem, DivergedLoss) map to exit code 2.
"""


class UdiscError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatch(UdiscError):
    pass


class NonFiniteInput(UdiscError):
    pass


class EmptyInput(UdiscError):
    pass


class ParseError(UdiscError):
    def __init__(self, message: str, row: int | None = None, col: str | int | None = None):
        loc = ""
        if row is not None:
            loc += f" at row {row}"
        if col is not None:
            loc += f", column {col!r}"
        super().__init__(message + loc)
        self.row = row
        self.col = col


class LabelNotNumeric(UdiscError):
    pass


class EmptyFile(UdiscError):
    pass


class AllMissingColumn(UdiscError):
    pass


class NotAPermutation(UdiscError):
    pass


class DuplicateAttribute(UdiscError):
    pass


class UnknownAttribute(UdiscError):
    pass


class KindMismatch(UdiscError):
    pass


class NoTextAttributes(UdiscError):
    pass


class NoNumericAttributes(UdiscError):
    pass


class NeedTwoObjectives(UdiscError):
    pass


class KMismatch(UdiscError):
    pass


class SchemaMismatch(UdiscError):
    def __init__(self, missing: list[str], extra: list[str]):
        super().__init__(f"schema mismatch: missing attributes {missing}, extra attributes {extra}")
        self.missing = missing
        self.extra = extra


class NumericFailure(UdiscError):
    """Base for failures of the numeric machinery (CLI exit code 2)."""


class SingularSystem(NumericFailure):
    pass


class DivergedLoss(NumericFailure):
    pass
