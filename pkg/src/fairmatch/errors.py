"""Exception types shared across the package."""


class FairmatchError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatch(FairmatchError):
    """A matrix, vector, or matching has the wrong shape for its market."""


class NegativeValue(FairmatchError):
    """A valuation or degree entry is negative."""


class DegreeExceedsSide(FairmatchError):
    """A degree cap exceeds the size of the opposite side."""


class SchemaError(FairmatchError):
    """A JSON document is well-formed but violates the expected schema.

    The message starts with the offending field path, e.g. ``$.deg_right``.
    """


class NotCoprime(FairmatchError):
    """A round-robin step size is not invertible modulo the side size."""


class BadParameter(FairmatchError):
    """An argument is outside an operation's documented domain."""


class SizeMismatch(FairmatchError):
    """Total degree capacity differs between the two sides."""


class BudgetExceeded(FairmatchError):
    """An exhaustive computation ran out of its node or time budget.

    Attributes
    ----------
    best : best lower bound (or partial result) established before the
        budget ran out, or ``None``.
    nodes : number of search nodes explored when the budget tripped.
    """

    def __init__(self, message: str, *, best=None, nodes: int | None = None):
        super().__init__(message)
        self.best = best
        self.nodes = nodes
