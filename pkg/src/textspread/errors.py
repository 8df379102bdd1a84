"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Bad input data or configuration: malformed files, schema violations, range errors."""


class EstimationError(RuntimeError):
    """A model fit could not be produced: rank deficiency, separation, non-convergence."""
