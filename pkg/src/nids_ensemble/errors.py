"""Exception types shared across the package.

DataError subclasses signal bad or inconsistent input (CLI exit code 3);
ArtifactError subclasses signal unreadable saved models. Plain OSError is
left to the caller (CLI exit code 4).
"""


class NidsError(Exception):
    """Base class for every error raised by this package."""


class DataError(NidsError):
    """Invalid or inconsistent input data."""


class MissingColumn(DataError):
    """CSV header does not match the schema column set."""


class MalformedRow(DataError):
    """A data row has the wrong cell count or an unparsable numeric cell."""


class EmptyInput(DataError):
    """No data rows / no labels where at least one is required."""


class UnknownClassName(DataError):
    """Target value does not name a known class."""


class FeatureMismatch(DataError):
    """Matrix feature set differs from the fitted scaler's feature set."""


class UnknownFeature(DataError):
    """Requested feature name is not present in the matrix."""


class ZeroClass(DataError):
    """A class with zero records where a ratio over counts is required."""


class ArityMismatch(DataError):
    """Row width differs from the arity a model was trained with."""


class LengthMismatch(DataError):
    """Paired label arrays have different lengths."""


class AlignmentMismatch(DataError):
    """Score matrix rows do not align with the label arrays."""


class AlreadyResolved(DataError):
    """Range resolution applied to a model that is already resolved."""


class NotResolved(DataError):
    """Score correction applied with an unresolved overlap model."""


class ShapeMismatch(DataError):
    """Score matrices disagree in shape."""


class EmptyMatrix(DataError):
    """Confusion matrix with zero total count."""


class SchemaMismatch(DataError):
    """Evaluation data does not conform to the artifact's schema."""


class ArtifactError(NidsError):
    """Problems reading or writing a serialized ensemble."""


class UnsupportedVersion(ArtifactError):
    """Artifact format version is newer than this package understands."""


class CorruptArtifact(ArtifactError):
    """Artifact file is truncated or not valid for this format."""
