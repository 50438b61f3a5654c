"""Exception hierarchy shared by all rgbabench modules.

The CLI maps these onto exit codes: InputError (and every other
RgbaBenchError) exits 2, PluginError exits 3.
"""


class RgbaBenchError(Exception):
    """Base class for all errors raised by this package."""


class InputError(RgbaBenchError):
    """Invalid caller input: bad dimensions, domains, files, or arguments."""


class NumericalError(RgbaBenchError):
    """A numerical routine failed to produce a trustworthy result."""


class PluginError(RgbaBenchError):
    """An external scorer process failed, timed out, or misbehaved."""

    def __init__(self, message: str, stderr: str = ""):
        super().__init__(message)
        self.stderr = stderr
