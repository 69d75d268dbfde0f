"""Exception hierarchy shared by all modules."""


class EDGError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgument(EDGError, ValueError):
    pass


class UnsupportedDegree(EDGError, ValueError):
    pass


class StabilizationError(EDGError):
    """Raised when ``min(tau1 - beta.n / 2) > 0`` fails on some face."""

    def __init__(self, face, value):
        self.face = int(face)
        self.value = float(value)
        super().__init__(
            f"stabilization condition violated on face {self.face}: "
            f"min(tau1 - beta.n/2) = {self.value:.6g} <= 0")


class FactorizationError(EDGError):
    pass


class CondensationError(EDGError):
    def __init__(self, element, reason="singular local block"):
        self.element = int(element)
        super().__init__(f"condensation failed on element {self.element}: {reason}")


class InvalidProblem(EDGError, ValueError):
    pass


class InvalidComparison(EDGError, ValueError):
    pass
