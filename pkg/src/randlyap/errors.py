"""Exception types shared across the package."""


class RandLyapError(Exception):
    pass


class NoCriticalPoints(RandLyapError, ValueError):
    """f' has no zeros on the circle."""


class GridTooCoarse(RandLyapError, ValueError):
    """Two roots fall closer together than the bracketing grid can resolve."""


class InvalidC(RandLyapError, ValueError):
    pass


class SingularInput(RandLyapError, ValueError):
    pass


class H3Failed(RandLyapError):
    pass


class PreconditionError(RandLyapError, ValueError):
    pass


class ConeNotMapped(RandLyapError):
    pass


class NotInGN(RandLyapError):
    pass


class CaseUnrealizable(RandLyapError):
    """Rejection sampling found no configuration for a word case."""


class NumericalOverflow(RandLyapError, OverflowError):
    pass


class ConfigError(RandLyapError, ValueError):
    pass
