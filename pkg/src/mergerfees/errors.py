"""Exception types shared across the package."""


class DomainError(ValueError):
    """Evaluation requested outside a model's mathematical domain."""


class ConvergenceError(RuntimeError):
    """An iterative solve (inversion, root finding) failed to converge."""


class ScenarioError(ValueError):
    """A scenario file failed validation; message carries the field path."""
