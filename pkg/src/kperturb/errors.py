"""Exception hierarchy shared by all modules."""


class KPError(Exception):
    """Base class for library errors."""


class InvalidArgument(KPError, ValueError):
    pass


class AliasingError(KPError, ArithmeticError):
    """Grid too coarse or too small for the requested spectral computation."""


class NoConvergence(KPError, ArithmeticError):
    pass


class UnsupportedPerturbation(KPError, ValueError):
    """The first series term charges points where the base kernel vanishes."""


class PreconditionViolation(KPError, ValueError):
    pass
