"""Exception types raised across the package."""


class TwrSwiptError(Exception):
    """Base class for every error raised by twrswipt."""


class RankDeficient(TwrSwiptError, ValueError):
    pass


class NotHermitian(TwrSwiptError, ValueError):
    pass


class NotOrthonormal(TwrSwiptError, ValueError):
    pass


class Singular(TwrSwiptError, ValueError):
    pass


class FullSplit(TwrSwiptError, ValueError):
    """Raised when rho == 1: the information-decoding branch carries no signal."""


class OutOfRange(TwrSwiptError, IndexError):
    pass


class BudgetRange(TwrSwiptError, ValueError):
    pass


class EntryRange(TwrSwiptError, ValueError):
    pass


class BadFactor(TwrSwiptError, ValueError):
    pass


class NonUniform(TwrSwiptError, ValueError):
    pass


class InfeasibleConfig(TwrSwiptError, ValueError):
    pass


class DegenerateChannelWarning(RuntimeWarning):
    """A channel product lost rank and an arbitrary orthonormal completion was used."""
