"""Exception hierarchy shared by all scopeflow modules."""


class ScopeFlowError(Exception):
    """Base class for every error raised by this package."""


# --- file formats (flowio) ---------------------------------------------------

class BadMagicError(ScopeFlowError):
    """The .flo sentinel float at byte 0 is wrong."""


class TruncatedError(ScopeFlowError):
    """The payload is shorter than the header promises."""


class BadDimsError(ScopeFlowError):
    """Header declares non-positive width or height."""


class BadBitDepthError(ScopeFlowError):
    """Raster has the wrong sample bit depth for the format."""


class BadChannelCountError(ScopeFlowError):
    """Raster has the wrong number of channels for the format."""


class OutOfRangeError(ScopeFlowError):
    """Flow values exceed the encodable range of the target format."""


# --- sampling analysis -------------------------------------------------------

class InvalidGeometryError(ScopeFlowError):
    """Crop extents do not satisfy 1 <= crop <= image."""


class OutOfBoundsError(ScopeFlowError):
    """Pixel index lies outside the image."""


class TooLargeError(ScopeFlowError):
    """Exhaustive enumeration was asked for more placements than allowed."""


class EmptyCategoryError(ScopeFlowError):
    """A speed category contains no pixels; its mass ratio is undefined."""


# --- scoping -----------------------------------------------------------------

class InvalidStrategyError(ScopeFlowError):
    """Crop strategy cannot produce a valid crop for the given image."""


class CropTooLargeError(ScopeFlowError):
    """Requested crop extents exceed the image extents."""


# --- augmentation ------------------------------------------------------------

class BadConfigError(ScopeFlowError):
    """Augmentation configuration violates a range invariant."""


class SingularTransformError(ScopeFlowError):
    """Affine transform is not invertible."""


# --- flowops -----------------------------------------------------------------

class DimMismatchError(ScopeFlowError):
    """Operands do not share the same raster dimensions."""


class NoValidPixelsError(ScopeFlowError):
    """Metric requested over an empty valid-pixel set."""


# --- schedule ----------------------------------------------------------------

class SchemaError(ScopeFlowError):
    """Config document is structurally wrong (unknown key, bad type).

    ``path`` holds the dotted field path, e.g. ``stages[1].crop.kind``.
    """

    def __init__(self, message: str, path: str | None = None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class ValidationError(ScopeFlowError):
    """Config document is well-formed but violates an invariant."""

    def __init__(self, message: str, path: str | None = None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class UnknownStageError(ScopeFlowError):
    """Stage name not present in the protocol."""


class EpochOutOfRangeError(ScopeFlowError):
    """Epoch index is outside the stage's configured epoch count."""
