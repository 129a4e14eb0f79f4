class SegmentationError(Exception):
    """Base class for every failure raised by scseg."""


class InvalidArgumentError(SegmentationError, ValueError):
    """An argument is out of range or has mismatched dimensions."""


class ImageFormatError(SegmentationError):
    """The file is not a supported image format or bit depth."""


class ImageWriteError(SegmentationError, OSError):
    """Writing an output image failed."""
