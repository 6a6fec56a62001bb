"""Exception hierarchy shared across the package."""


class GeofmError(Exception):
    """Base class for all package errors."""


class ConfigError(GeofmError):
    """Invalid configuration: unknown key, bad enum value, missing path."""


class DataError(GeofmError):
    """Dataset layout, file content, or shape problems."""


class CheckpointError(GeofmError):
    """Archive is unreadable or its tensors do not fit the model."""


class MissingArtifactError(GeofmError):
    """A required artifact (checkpoint, manifest, report) does not exist."""


class TrainingDiverged(GeofmError):
    """Loss became non-finite; carries a diagnostic payload."""

    def __init__(self, message: str, payload: dict | None = None):
        super().__init__(message)
        self.payload = payload or {}
