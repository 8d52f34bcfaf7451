"""Exception hierarchy shared by every module.

``ArgumentError`` covers violated preconditions (the CLI maps it to exit
code 2); ``NumericError`` covers numerical breakdowns (exit code 1).
"""


class ArgumentError(ValueError):
    """Invalid argument: wrong shape, non-finite input, out-of-range value."""


class NumericError(ArithmeticError):
    """A numerical routine could not produce a trustworthy result."""


class FormatError(ValueError):
    """A serialized artifact is malformed.

    ``path`` names the offending field, e.g. ``"kernel.sigma"``.
    """

    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class UnsupportedVersionError(FormatError):
    """The artifact was written by a newer (or unknown) format version."""


class DivergenceError(RuntimeError):
    """A simulated trajectory left the finite floating-point range."""

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"trajectory diverged at step {step}")
