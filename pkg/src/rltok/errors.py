"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: data/parse/stream problems exit 1,
configuration and provenance problems exit 2.
"""


class RltokError(Exception):
    """Base class for all errors raised by this package."""


class DataError(RltokError, ValueError):
    """Input data violates a contract: non-finite pixels, bad shapes,
    out-of-range indices, malformed token arrays."""


class ConfigError(RltokError, ValueError):
    """A configuration value is invalid or inconsistent: bad threshold,
    unsorted sweep grid, mixed tubelet configs in one batch."""


class GridConfigError(ConfigError):
    """A tubelet configuration does not divide the video dimensions."""


class ProvenanceError(ConfigError):
    """Two artifacts that must share an origin do not match, e.g. a token
    sequence rendered over a video with different dimensions."""


class FormatError(RltokError, ValueError):
    """A serialized artifact cannot be parsed: bad magic, truncation,
    inconsistent declared sizes."""


class StreamError(FormatError):
    """A frame stream ended before the declared frame count arrived."""
