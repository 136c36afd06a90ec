"""Exception hierarchy shared by every diffrecon subpackage."""


class DiffreconError(Exception):
    """Base class for all diffrecon errors.

    Attributes:
        diagnostics: Records accumulated before an aborted reconstruction, if any
    """

    def __init__(self, *args):
        super().__init__(*args)
        self.diagnostics: list[dict] = []


class ConfigurationError(DiffreconError, ValueError):
    """Geometry mismatch, invalid parameters, or a malformed config file."""


class DomainError(DiffreconError, ArithmeticError):
    """A quantity is undefined for the given inputs (log of zero mean, zero ROI mean, ...)."""


class FormatError(DiffreconError, ValueError):
    """A binary file has the wrong magic, version, or size."""


class DivergenceError(DiffreconError, RuntimeError):
    """A loss or iterate became non-finite.

    Attributes:
        step: Index of the step that produced the non-finite value
        diagnostics: Records accumulated up to the failure, for dumping to disk
    """

    def __init__(self, message: str, step: int, diagnostics: list[dict] | None = None):
        super().__init__(f"{message} (step {step})")
        self.step = step
        self.diagnostics = diagnostics or []
