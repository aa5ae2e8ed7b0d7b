"""Exception types shared across the package."""


class SizingError(ValueError):
    """Shape or size precondition violated (mismatched rasters, bad kernel size, ...)."""


class KernelFileError(ValueError):
    """Blur-kernel file could not be parsed; message names the violation."""


class ConfigError(ValueError):
    """Inconsistent model/experiment configuration (channel mismatch, unknown preset, ...)."""


class DepthValidityError(ValueError):
    """Depth map validity precondition violated (invalid pixels where all-valid is required)."""


class DatasetError(RuntimeError):
    """Dataset on disk is missing, malformed, or would be overwritten."""
