"""Exception types shared across the package."""


class IplError(Exception):
    """Base class for every error this package raises on purpose."""


class ConfigError(IplError, ValueError):
    """Bad run configuration: unknown key, wrong type, or invalid value."""


class DimensionMismatchError(IplError, ValueError):
    """Tensor shapes do not line up with the declared geometry."""


class DegenerateVectorError(IplError, ValueError):
    """A vector that must be normalized has (near-)zero norm."""


class ArchiveError(IplError, ValueError):
    """Tensor archive is malformed: missing files, bad sizes, wrong version."""


class TrainingAbortError(IplError, RuntimeError):
    """Training hit an unrecoverable numeric state; carries the iteration index."""

    def __init__(self, iteration: int, message: str):
        self.iteration = iteration
        super().__init__(f"iteration {iteration}: {message}")


class TrainingStallError(IplError, RuntimeError):
    """Adaptation made no progress for too many consecutive iterations."""

    def __init__(self, iteration: int, message: str):
        self.iteration = iteration
        super().__init__(f"iteration {iteration}: {message}")
