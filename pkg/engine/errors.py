class SalClassError(Exception):
    """Base class for every error raised by the SalClassNet packages."""


class ShapeError(SalClassError, ValueError):
    """Tensor extents do not satisfy an operation's shape contract."""


class ContractError(SalClassError, ValueError):
    """A precondition of an operation was violated."""


class DegenerateStatisticsError(SalClassError, ArithmeticError):
    """Statistics are undefined for the given data (constant map, single element, ...)."""


class BuildError(SalClassError):
    """A network configuration cannot be built."""

    def __init__(self, message, stage=None):
        super().__init__(message)
        self.stage = stage


class NonFiniteLossError(SalClassError, FloatingPointError):
    """Training produced a NaN or infinite loss."""

    def __init__(self, batch_index, iteration, values):
        self.batch_index = batch_index
        self.iteration = iteration
        self.values = values
        super().__init__(
            f"non-finite loss at batch {batch_index}, iteration {iteration}: "
            + ", ".join(f"{k}={v}" for k, v in values.items())
        )


class ManifestError(SalClassError):
    """A manifest or fixation file is malformed."""

    def __init__(self, message, path=None, line_number=None):
        self.path = path
        self.line_number = line_number
        location = ""
        if path is not None:
            location = f"{path}"
            if line_number is not None:
                location += f":{line_number}"
            location += ": "
        super().__init__(location + message)


class ConfigError(SalClassError):
    """Configuration values or keys are invalid."""


class CheckpointError(SalClassError):
    """A checkpoint file is missing, truncated or of an unknown format."""
