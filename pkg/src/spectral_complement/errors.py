"""Exception hierarchy.

Every error raised on purpose by the library derives from
:class:`SpectralComplementError`; the CLI maps each concrete class to one
exit code.
"""


class SpectralComplementError(Exception):
    """Base class for library errors."""


class InputError(SpectralComplementError, ValueError):
    """Malformed or inconsistent input data."""


class ParseError(InputError):
    """A file could not be parsed. ``line`` is 1-based when known."""

    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


class DegenerateSignalError(InputError):
    """A signal is identically zero where a normalisation needs it nonzero."""


class SamplingError(InputError):
    """Not enough eligible nodes to draw the requested negatives."""


class ConfigError(SpectralComplementError, ValueError):
    """Invalid configuration value or unknown configuration key."""


class CapacityError(SpectralComplementError):
    """Problem size exceeds a configured dense-computation cap."""


class DivergenceError(SpectralComplementError, RuntimeError):
    """Training produced a non-finite loss."""


class ReportIOError(SpectralComplementError, OSError):
    """Writing an output artifact failed."""
