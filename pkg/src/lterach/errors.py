"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """An operation was called with arguments that break its precondition."""


class PoolExhausted(LookupError):
    """No preamble is eligible for a device in the current pool."""


class CapacityError(OverflowError):
    """A closed-form count exceeds the 64-bit capacity bound."""


class PartialTraceError(ValueError):
    """A trace ends with devices that never reached a terminal state."""


class ScenarioError(ValueError):
    """A scenario file failed to parse or validate.

    ``line`` is the 1-based line in the source file when known.
    """

    def __init__(self, message, *, path=None, line=None):
        self.path = path
        self.line = line
        self.reason = message
        prefix = ""
        if path is not None:
            prefix = f"{path}:{line}: " if line is not None else f"{path}: "
        elif line is not None:
            prefix = f"line {line}: "
        super().__init__(prefix + message)
