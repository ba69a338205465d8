"""Exception types shared across the package."""


class Ink2TexError(Exception):
    """Base class for all errors raised by ink2tex."""


class InkParseError(Ink2TexError):
    """Input bytes are not parseable at all (e.g. malformed XML)."""


class InkFormatError(Ink2TexError):
    """Input parsed but violates the ink format contract."""


class EmptyInkError(InkParseError):
    """Input contains no trajectory data."""


class VocabularyError(Ink2TexError):
    """Vocabulary construction or lookup failure."""


class TokenError(Ink2TexError):
    """A token index is outside the vocabulary range."""


class DimensionError(Ink2TexError):
    """Tensor shapes do not conform for the requested operation."""


class GraphError(Ink2TexError):
    """Autodiff contract violation (e.g. backward from a non-scalar)."""


class ModelIOError(Ink2TexError):
    """Model container serialization or deserialization failure."""


class ConfigError(Ink2TexError):
    """Inconsistent configuration (shapes, vocabulary sizes, flags)."""


class TrainingError(Ink2TexError):
    """Training aborted (empty dataset, all-NaN epoch, ...)."""


class DataError(Ink2TexError):
    """CLI-level data problem (missing file, bad archive, mismatched inputs)."""
