"""Exception hierarchy."""


class FBVPError(Exception):
    """Base class for all errors raised by this package."""


class ModeUnsupported(FBVPError):
    pass


class IntervalInvalid(FBVPError):
    pass


class RhoNonpositive(FBVPError):
    pass


class CInvalid(FBVPError):
    pass


class NonlinearityNegative(FBVPError):
    """The nonlinearity returned a negative value, outside its declared range."""


# name used by the envelope evaluator
NegativeValue = NonlinearityNegative


class AlphaGammaInvalid(FBVPError):
    pass


class DelayTooLarge(FBVPError):
    pass


class RhoTooSmall(FBVPError):
    pass


class ConfigError(FBVPError):
    pass


class NoConvergence(FBVPError):
    """Raised by the solver; carries the best report found so far."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
