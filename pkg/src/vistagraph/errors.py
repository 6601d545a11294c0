"""Exception hierarchy shared across the toolkit."""


class VistagraphError(Exception):
    """Base class for all toolkit errors."""


class InvalidArgumentError(VistagraphError):
    """An input value violates a documented precondition."""


class DegenerateGeometryError(VistagraphError):
    """Geometry is undefined for the given configuration (e.g. coincident points)."""


class OutOfBoundsError(VistagraphError):
    """A query point falls outside the domain it must lie in."""


class EmptyDomainError(VistagraphError):
    """An operation was asked to draw from an empty candidate set."""


class PrerequisiteError(VistagraphError):
    """A pipeline stage artifact required by this stage is missing."""


class SchemaError(VistagraphError):
    """A file does not conform to its documented schema."""
