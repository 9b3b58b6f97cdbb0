class ConfigurationError(ValueError):
    """Invalid problem or run configuration."""


class NumericalSingularityError(ArithmeticError):
    """The free-free stiffness block is not positive definite."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class DegenerateProblemError(ArithmeticError):
    """A mechanism degree produces no strain energy in the domain."""
