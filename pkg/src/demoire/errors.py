"""Exception types raised across the package."""


class DemoireError(ValueError):
    """Base class for every error raised by this package."""


class OddDimensions(DemoireError):
    pass


class DimensionMismatch(DemoireError):
    pass


class SingularHomography(DemoireError):
    pass


class NonPositiveSigma(DemoireError):
    pass


class NonPositiveQuantFactor(DemoireError):
    pass


class ImageTooSmall(DemoireError):
    pass


class TooSmall(ImageTooSmall):
    """Image smaller than the SSIM window."""


class RatioOutOfRange(DemoireError):
    pass


class ImageTooSmallForPatches(ImageTooSmall):
    pass


class BadThresholds(DemoireError):
    pass


class ShapeMismatch(DemoireError):
    pass


class NonFiniteValue(DemoireError, ArithmeticError):
    """A tensor picked up NaN or Inf during a forward op."""


class NonFiniteLoss(NonFiniteValue):
    pass


class UnknownOp(DemoireError, KeyError):
    pass


class ConfigError(DemoireError):
    pass


class EmptyInputDir(DemoireError):
    pass


class UnwritableOutput(DemoireError, OSError):
    pass


class MissingFiles(DemoireError, FileNotFoundError):
    pass


class CheckpointConfigMismatch(DemoireError):
    pass
