"""Exception hierarchy.

Validation errors (bad user input: malformed files, inconsistent shapes)
derive from ValidationError so callers can map them to a distinct exit
code; everything else signals an internal misuse of the API.
"""


class StrapsimError(Exception):
    """Base class for all library errors."""


class ValidationError(StrapsimError):
    """Invalid input data or configuration supplied by the caller."""


# -- weighted sets ----------------------------------------------------------

class EmptySetError(ValidationError):
    pass


class NegativeWeightError(ValidationError):
    pass


class DuplicateIdError(ValidationError):
    pass


# -- similarity matrices ----------------------------------------------------

class UnknownConstituentError(ValidationError):
    def __init__(self, constituent_id):
        super().__init__(f"unknown constituent id: {constituent_id!r}")
        self.constituent_id = constituent_id


class DimensionMismatchError(ValidationError):
    pass


class NotSquareError(ValidationError):
    pass


class AsymmetryError(ValidationError):
    pass


# -- metrics ----------------------------------------------------------------

class DegenerateUnionError(ValidationError):
    pass


class TooLargeError(ValidationError):
    pass


# -- constituent-level backends ---------------------------------------------

class NonPositiveColumnMaxError(ValidationError):
    def __init__(self, column):
        super().__init__(f"column {column!r} has non-positive maximum")
        self.column = column


class TooFewRowsError(ValidationError):
    pass


class EmptyCorpusError(ValidationError):
    pass


class UnknownDocumentError(ValidationError):
    def __init__(self, doc_id):
        super().__init__(f"unknown document id: {doc_id!r}")
        self.doc_id = doc_id


class ZeroVectorError(ValidationError):
    pass


class TargetMissingError(ValidationError):
    pass


class InsufficientRowsError(ValidationError):
    pass


class SchemaMismatchError(ValidationError):
    pass


# -- evaluation -------------------------------------------------------------

class EmptyPoolError(ValidationError):
    pass


class LengthMismatchError(ValidationError):
    pass


class ZeroTruthForMapeError(ValidationError):
    pass


class TooShortError(ValidationError):
    pass


class ConstantInputError(ValidationError):
    pass


class MissingReturnsError(ValidationError):
    def __init__(self, entity_id):
        super().__init__(f"no return series for entity: {entity_id!r}")
        self.entity_id = entity_id


# -- ingest -----------------------------------------------------------------

class ParseError(ValidationError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DuplicateHoldingError(ParseError):
    pass


class DuplicatePeriodError(ValidationError):
    pass


class BadPeriodFormatError(ValidationError):
    pass


class RowCountMismatchWarning(UserWarning):
    """Dataset row/column counts drifted from the documented reference."""


class ClampWarning(UserWarning):
    """Similarity values outside [0, 1] were clamped on load."""
