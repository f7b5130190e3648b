"""Package-wide exception types."""


class NumericalError(RuntimeError):
    """A linear-algebra or iteration failure that invalidates the run."""
