"""Exception hierarchy.

Every error carries a ``stage`` label so that the pipeline and the CLI can
report where a failure happened (``ERROR:<stage>:<field>``).
"""


class DFRError(Exception):
    """Base class for all package errors."""

    stage = "library"

    def __init__(self, message, *, stage=None, field=None):
        super().__init__(message)
        if stage is not None:
            self.stage = stage
        self.field = field


class ShapeError(DFRError, ValueError):
    """Operands have incompatible shapes or object variants."""


class InputError(DFRError, ValueError):
    """An argument violates a documented precondition."""


class ValidationError(InputError):
    """Raw data cannot be turned into a valid metric object."""


class NumericError(DFRError, ArithmeticError):
    """A computation produced non-finite values or failed to factorize."""


class BandwidthError(DFRError):
    """No usable kernel mass around the query point."""

    stage = "lfr"


class DegenerateEmbeddingError(DFRError):
    """The embedding has zero spread in every coordinate."""

    stage = "lfr"
