"""Exception hierarchy.

Everything derives from :class:`ListCombineError`, itself a ``ValueError``, so
callers that only care about "bad input" can catch the builtin.
"""


class ListCombineError(ValueError):
    pass


class EmptyInput(ListCombineError):
    pass


class InsufficientData(ListCombineError):
    pass


class OutOfDomain(ListCombineError):
    pass


class DesignInvalid(ListCombineError):
    pass


class AllRecordsExcluded(ListCombineError):
    pass


class DegenerateCells(ListCombineError):
    """A (treatment, direct answer) cell is too small for the requested statistic."""


class InsufficientConfessors(DegenerateCells):
    """Fewer than two "Yes" respondents in a treatment arm."""


class MethodMismatch(ListCombineError):
    pass


class ZeroPValue(ListCombineError):
    pass


class InvalidParams(ListCombineError):
    pass


class DegenerateParams(ListCombineError):
    """Population variances needed by an asymptotic formula vanish."""


class InvalidGrid(ListCombineError):
    pass


class MissingColumn(ListCombineError):
    pass


class UnparseableCell(ListCombineError):
    def __init__(self, row: int, column: str, value: str):
        super().__init__(f"row {row}, column {column!r}: cannot parse {value!r}")
        self.row = row
        self.column = column
        self.value = value


class EmptyFile(ListCombineError):
    pass
