"""Exception types shared across the package."""


class PipelineError(Exception):
    """Base class for package errors. `category` feeds the CLI's stderr line."""

    category = "error"


class FormatError(PipelineError):
    category = "format"


class DimensionError(PipelineError):
    category = "dimension"


class InsufficientSamplesError(PipelineError):
    category = "insufficient-samples"


class SingularityError(PipelineError):
    category = "singular"


class ValidationError(PipelineError):
    category = "validation"


class EncodingError(PipelineError):
    category = "encoding"


class ConvergenceWarning(UserWarning):
    """Iterative solver returned before reaching its tolerance."""
