"""Exception types shared across the package."""


class MetadseError(Exception):
    """Base class for all package errors."""


class ShapeError(MetadseError):
    """Operands have incompatible shapes."""


class NumericError(MetadseError):
    """A computation produced a non-finite value or diverged."""


class ContractError(MetadseError):
    """A documented precondition was violated."""


class InvalidPoint(MetadseError):
    """Design point indices fall outside the candidate sets."""


class InvalidVector(MetadseError):
    """Feature vector has the wrong length or range for the space."""


class DegenerateMask(MetadseError):
    """Architectural mask has an all-zero row."""


class SourceExhausted(MetadseError):
    """Workload source cannot yield enough distinct design points."""


class DataError(MetadseError):
    """Base class for dataset file problems."""


class SchemaError(DataError):
    """A dataset value does not belong to the declared design space."""


class DuplicateError(DataError):
    """A dataset file contains the same design point twice."""


class ParseError(DataError):
    """A dataset or config file is not syntactically valid."""
