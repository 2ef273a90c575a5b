"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid problem setup: bad domain, grid, bounds, or config document."""


class ExpressionError(ConfigurationError):
    """Coefficient expression could not be parsed."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at offset {position}")
        self.position = position


class NonConvergenceError(RuntimeError):
    """An iterative solver stopped without meeting its tolerance."""

    def __init__(self, message: str, residual: float | None = None, diagnostics: dict | None = None):
        super().__init__(message)
        self.residual = residual
        self.diagnostics = diagnostics or {}


class UnsupportedOperatorError(ConfigurationError):
    """Operation is not defined for the given operator variant."""
