"""
Typed exceptions raised across the package. The CLI maps them to exit codes.
"""


class FallAlertError(Exception):
    """Base class of every error raised on purpose by this package."""


class DatasetError(FallAlertError, ValueError):
    """Problems with a dataset file or its contents."""


class SchemaError(DatasetError):
    """The header does not match the dataset schema (missing / unmapped columns)."""


class ParseError(DatasetError):
    """A cell could not be parsed. Carries the 1-based file row number."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class EmptyDatasetError(DatasetError):
    pass


class ValidationError(DatasetError):
    """A recording violates the sample range, ordering or sample rate invariants."""


class ConfigError(FallAlertError, ValueError):
    pass


class FeatureConfigError(FallAlertError, ValueError):
    """A FeatureVector does not match the feature configuration of a model."""


class DegenerateInputError(FallAlertError, ValueError):
    pass


class ProtocolError(FallAlertError):
    """Base class of every wire protocol error."""


class FrameError(ProtocolError):
    """The byte stream does not hold one complete, well-formed message."""


class VersionError(ProtocolError):
    def __init__(self, version, supported):
        super().__init__(
            f"Unsupported protocol version {version!r} - supported versions: {list(supported)}"
        )
        self.version = version
        self.supported = tuple(supported)


class PayloadError(ProtocolError, ValueError):
    """A message is well framed but its fields are invalid."""


class SinkError(FallAlertError):
    pass


class InternalError(FallAlertError):
    """An unexpected failure while serving a message - the server replies instead of dropping the connection."""
