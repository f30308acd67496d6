"""Exception hierarchy shared across the package.

Exit-code mapping used by the CLI: ConfigError -> 2, DataError (and
subclasses) -> 3, NumericError -> 4.
"""


class KgcapError(Exception):
    """Base class for all package errors."""


class ConfigError(KgcapError):
    """Invalid configuration: bad key, bad value, unusable ratio, etc."""


class DataError(KgcapError):
    """Problem with input data content (NaN feature, bad row, ...)."""


class FormatError(DataError):
    """Malformed file: bad magic, bad version, ragged row, truncation."""


class SchemaError(DataError):
    """CSV/JSON structure does not match the documented schema."""


class ConflictError(DataError):
    """Duplicate identifiers where uniqueness is required."""


class VocabularyError(DataError):
    """Token index out of range or unknown token."""


class ShapeError(KgcapError):
    """Tensor shape mismatch; message names both shapes."""


class NumericError(KgcapError):
    """Non-finite values where finiteness is required (NaN loss, ...)."""


class ZeroNormError(NumericError):
    """Cosine similarity requested for a zero-norm vector."""


class MissingArtifactError(KgcapError):
    """A pipeline stage input is missing; names the producing subcommand."""
