"""Exception hierarchy.

Everything raised on bad input derives from :class:`DriftLensError` (itself a
``ValueError``) so callers and the CLI can map failures to exit codes without
catching unrelated bugs.
"""


class DriftLensError(ValueError):
    """Base class for data and contract errors."""


class MissingColumn(DriftLensError):
    pass


class NonNumericCell(DriftLensError):
    def __init__(self, row, col, value=None):
        self.row = row
        self.col = col
        self.value = value
        super().__init__(f"non-numeric cell at row {row}, column {col!r}: {value!r}")


class EmptyDataset(DriftLensError):
    pass


class ConstantTime(DriftLensError):
    pass


class DegenerateSplit(DriftLensError):
    pass


class TooFewSamples(DriftLensError):
    pass


class SingleClass(DriftLensError):
    pass


class DimensionMismatch(DriftLensError):
    pass


class WrongModelKind(DriftLensError):
    pass


class DomainError(DriftLensError):
    pass


class MismatchedDataset(DriftLensError):
    pass


class DisconnectedGraph(DriftLensError):
    pass


class EmptyGroup(DriftLensError):
    pass


class KTooLarge(DriftLensError):
    pass


class NoTargetSamples(DriftLensError):
    pass


class UnknownKind(DriftLensError):
    pass


class TooManyFeatures(DriftLensError):
    pass


class CyclicGraph(DriftLensError):
    pass


class IndexOutOfRange(DriftLensError):
    pass


class SingleClassTruth(DriftLensError):
    pass
