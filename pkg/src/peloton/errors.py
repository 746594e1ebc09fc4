"""Exception hierarchy shared across the package.

Grouping matters for the CLI, which maps error families to exit codes:
usage problems exit 1, data problems exit 2, model/artifact problems exit 3.
"""


class PelotonError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgumentError(PelotonError, ValueError):
    """An argument violates a documented precondition."""


class DataError(PelotonError):
    """Base class for dataset ingestion and validation failures."""


class MalformedFileError(DataError):
    """The file could not be parsed at all (bad CSV structure, wrong header)."""


class SchemaViolationError(DataError):
    """A row or field violates the dataset schema.

    Carries enough context to point the user at the offending cell.
    """

    def __init__(self, message: str, *, row: int | None = None, field: str | None = None):
        self.row = row
        self.field = field
        where = []
        if row is not None:
            where.append(f"row {row}")
        if field is not None:
            where.append(f"field '{field}'")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(message + suffix)


class EmptyDatasetError(DataError):
    """The source contained no data rows."""


class InsufficientDataError(DataError):
    """A procedure needs more rows than the dataset provides."""


class UndefinedMetricError(PelotonError):
    """A metric is mathematically undefined for the given inputs."""


class ConfigurationError(PelotonError):
    """An invalid combination of configuration values."""


class ModelError(PelotonError):
    """Base class for model and artifact failures."""


class DimensionalityError(ModelError, ValueError):
    """Feature vector shape does not match what the model was fitted on."""


class ArtifactError(ModelError):
    """A persisted artifact is missing, corrupt, or stale."""


class StaleArtifactError(ArtifactError):
    """Artifact fingerprint does not match its manifest or source data."""
