"""Exception types shared across the package."""


class SonarFieldError(Exception):
    """Base class for all package errors."""


class ParameterError(SonarFieldError, ValueError):
    """An argument violates an operation's precondition."""


class AlignmentError(SonarFieldError):
    """Audio and IMU streams cannot be brought into alignment."""


class FeatureError(SonarFieldError, ValueError):
    """A window cannot be mapped to a feature vector."""


class TrainingError(SonarFieldError, ValueError):
    """Training input is degenerate (single class, NaN features, ...)."""


class PredictionError(SonarFieldError, ValueError):
    """Query is incompatible with the trained model."""


class ModelFormatError(SonarFieldError, ValueError):
    """A serialized model is malformed.

    ``offset`` holds the byte offset of the first problem when known.
    """

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message)
        self.offset = offset


class ModelVersionError(ModelFormatError):
    """A serialized model declares an unsupported format version."""


class EvaluationError(SonarFieldError, ValueError):
    """An evaluation request cannot be satisfied by the dataset."""


class LayoutMismatchError(SonarFieldError, ValueError):
    """A model's feature layout does not match the requested configuration."""


class DataError(SonarFieldError):
    """A stored session or manifest is unreadable or inconsistent."""
