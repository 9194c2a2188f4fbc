"""Exception hierarchy shared by all cdes modules."""


class CdesError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(CdesError):
    """A file failed to parse or violated its format contract.

    Carries enough context (path, line or byte offset) to locate the
    offending input without re-running under a debugger.
    """

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix = f"{path}: "
        if line is not None:
            prefix += f"line {line}: "
        super().__init__(prefix + message)


class ValidationError(CdesError):
    """Arguments, configuration, or data violated a precondition."""


class TrainingError(CdesError):
    """Training aborted (for example a non-finite loss was produced)."""
