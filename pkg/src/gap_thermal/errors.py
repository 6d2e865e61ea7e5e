"""Exception types shared across the package."""


class InvalidParameterError(ValueError):
    pass


class ResourceLimitError(RuntimeError):
    pass


class UnsupportedModelError(ValueError):
    pass


class StripDivergenceError(ArithmeticError):
    """Truncated series is unreliable at the requested complex points."""

    def __init__(self, message, tail_estimate):
        super().__init__(message)
        self.tail_estimate = tail_estimate


class NodeError(ArithmeticError):
    """The wave function (nearly) vanishes where the velocity is requested."""

    def __init__(self, message, location, density=None):
        super().__init__(message)
        self.location = location
        self.density = density
