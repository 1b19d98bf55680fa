"""Exception hierarchy shared by all pipeline stages."""


class MonoCombError(Exception):
    """Base class for every error raised by this package."""


class DomainError(MonoCombError, ValueError):
    """A value lies outside the mathematical domain of an operation."""


class ShapeError(MonoCombError, ValueError):
    """Inputs that must share a pixel grid do not."""


class FormatError(MonoCombError, ValueError):
    """A file does not follow the expected wire format."""


class RangeError(MonoCombError, ValueError):
    """A value cannot be represented in the target file encoding."""


class PreconditionError(MonoCombError, ValueError):
    """An input violates a documented precondition (e.g. density)."""


class EmptyInputError(MonoCombError, ValueError):
    """An operation received no usable pixels."""


class SceneError(MonoCombError, ValueError):
    """A synthetic scene description is geometrically invalid."""


class ConfigError(MonoCombError, ValueError):
    """A pipeline or scene configuration is invalid."""
