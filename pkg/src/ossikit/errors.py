"""Exception types shared across the toolkit."""


class InvalidInputError(ValueError):
    """An argument violates an operation's precondition."""


class FormatError(ValueError):
    """A file does not conform to the expected on-disk format."""


class ShapeError(ValueError):
    """Tensor dimensions are inconsistent for the requested operation."""


class ConfigError(ValueError):
    """A configuration object is internally inconsistent."""


class DegenerateShapeError(ValueError):
    """A geometric construction collapsed (e.g. Joukowski circle with r = 1)."""


class EmptyRenderError(RuntimeError):
    """A bubble fell entirely outside the canvas; the caller may retry."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""
