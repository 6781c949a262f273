"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class RootFlipError(Exception):
    exit_code = 3


class ValidationError(RootFlipError):
    exit_code = 2


class NumericalError(RootFlipError):
    exit_code = 3


class ResourceError(RootFlipError):
    exit_code = 4


class ZeroPulse(NumericalError):
    pass


class UnscaledPulse(ValidationError):
    pass


class NotUnimodular(NumericalError):
    pass


class FactorizationFailure(NumericalError):
    pass


class LayoutOverflow(ValidationError):
    pass


class RippleViolation(NumericalError):
    pass


class DesignFailure(NumericalError):
    pass


class IllConditioned(NumericalError):
    pass


class ZeroRoot(NumericalError):
    pass


class TooLarge(ResourceError):
    pass


class AllMasked(ValidationError):
    pass


class NonFinite(NumericalError):
    pass


class PulseFormatError(ValidationError):
    pass
