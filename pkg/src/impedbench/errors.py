"""Error taxonomy shared by the library and the CLI exit-code mapping."""


class WorkbenchError(Exception):
    """Base class for all workbench errors."""


class InvalidInputError(WorkbenchError):
    """Malformed or out-of-contract input (CLI exit code 3)."""


class NumericalFailureError(WorkbenchError):
    """A solver or iteration failed to reach its stated accuracy (CLI exit code 4)."""


class InvariantViolationError(WorkbenchError):
    """A mathematical invariant the run promised to uphold was breached (CLI exit code 2)."""
