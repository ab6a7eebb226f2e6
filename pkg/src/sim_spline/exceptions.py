"""Exception hierarchy shared by all modules."""


class SimSplineError(Exception):
    """Base class for every error raised by this package."""


class DegenerateSampleError(SimSplineError, ValueError):
    pass


class DomainError(SimSplineError, ValueError):
    """A point lies outside the interval an object is defined on."""


class NumericalError(SimSplineError, ArithmeticError):
    pass


class SingularDesignError(NumericalError):
    pass


class PathDegenerateError(NumericalError):
    pass


class InitializationError(NumericalError):
    pass


class BootstrapInstabilityError(NumericalError):
    """Too many bootstrap replicates failed to produce a usable refit."""


class DataError(SimSplineError, ValueError):
    """Malformed or inconsistent input data."""
