"""Exception hierarchy shared across the package."""


class NohisError(Exception):
    """Base class for every error raised by this package."""


class EmptyClusterError(NohisError, ValueError):
    def __init__(self, msg="empty cluster"):
        super().__init__(msg)


class DegenerateClusterError(NohisError, ValueError):
    def __init__(self, msg="degenerate cluster"):
        super().__init__(msg)


class UnbalancedSplitError(NohisError, ValueError):
    def __init__(self, msg="unbalanced degenerate split"):
        super().__init__(msg)


class UnnormalizedDirectionError(NohisError, ValueError):
    def __init__(self, msg="unnormalized direction"):
        super().__init__(msg)


class DimensionMismatchError(NohisError, ValueError):
    pass


# --- binary formats ---

class FormatError(NohisError):
    """Malformed NOHI/NOHV stream."""


class BadMagicError(FormatError):
    def __init__(self, msg="bad magic"):
        super().__init__(msg)


class VersionMismatchError(FormatError):
    pass


class TruncatedStreamError(FormatError):
    def __init__(self, msg="truncated stream"):
        super().__init__(msg)


class CorruptIndexError(FormatError):
    pass


# --- images ---

class ImageError(NohisError):
    pass


class UnsupportedFormatError(ImageError):
    pass


class CorruptStreamError(ImageError):
    pass


class ZeroAreaImageError(ImageError):
    pass


class ImageTooSmallError(ImageError):
    pass


class PatchOutOfBoundsError(ImageError):
    pass


class FeaturelessQueryError(NohisError):
    def __init__(self, msg="featureless query"):
        super().__init__(msg)
