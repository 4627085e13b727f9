"""Exception hierarchy shared across the package."""


class ChoquardError(Exception):
    """Base class for every error raised by this package."""


class TauNonpositive(ChoquardError, ValueError):
    pass


class ZeroField(ChoquardError, ValueError):
    pass


class GridMismatch(ChoquardError, ValueError):
    pass


class AlphaOutOfRange(ChoquardError, ValueError):
    pass


class NoInteriorMax(ChoquardError, ArithmeticError):
    """The dilation path has no interior maximum (C <= 0 or A == 0)."""


class ShootingFailed(ChoquardError, RuntimeError):
    pass


class GridTooLarge(ChoquardError, ValueError):
    pass


class IncompatibleHalfSpace(ChoquardError, ValueError):
    pass


class ConfigInvalid(ChoquardError, ValueError):
    pass


class NonlinearityRejected(ChoquardError, ValueError):
    pass


class FieldFormatError(ChoquardError, ValueError):
    pass
