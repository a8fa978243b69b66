"""Exception types shared across the package."""


class AcssilError(Exception):
    """Base class for every error this package raises deliberately."""


class ShapeError(AcssilError, ValueError):
    """Array shapes or widths do not match what an operation requires."""


class NumericError(AcssilError, FloatingPointError):
    """A numeric invariant was violated (NaN/Inf where finite values are required)."""


class ConfigError(AcssilError, ValueError):
    """A configuration is internally inconsistent or missing required pieces."""


class DemoFormatError(AcssilError, ValueError):
    """A demonstration file is malformed; message carries line diagnostics."""


class GenerationError(AcssilError, RuntimeError):
    """Demonstration generation could not collect enough successful episodes."""
