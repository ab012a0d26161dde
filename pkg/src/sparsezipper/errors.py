"""Exception hierarchy shared by every subsystem."""


class SpzError(Exception):
    """Base class for all errors raised by sparsezipper."""


class ParseError(SpzError):
    """Malformed Matrix Market (or cache) input.

    ``line`` is the 1-based line number where the problem was found, or
    ``None`` when the error is not tied to one line.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DimensionError(SpzError):
    """Operand shapes are incompatible or not representable."""


class PreconditionError(SpzError):
    """An operation was called with inputs violating its contract."""


class PlanMismatchError(SpzError):
    """A value instruction found no reorder plan, or one that does not fit."""


class MemoryFault(SpzError):
    """Access outside the allocated simulated memory."""

    def __init__(self, addr, nbytes=4):
        self.addr = addr
        super().__init__(f"memory fault at address {addr:#x} ({nbytes} bytes)")


class EngineError(SpzError):
    """Structural hazard or inconsistent input detected by the trace engine."""


class ExecutionError(SpzError):
    """An instruction failed inside run_program.

    Carries the index of the failing instruction and the original error.
    """

    def __init__(self, index, instr, cause):
        self.index = index
        self.instr = instr
        self.cause = cause
        super().__init__(f"instruction {index} ({instr}) failed: {cause}")
