"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: usage problems exit 1, data and
validation problems (ConfigError, DomainError, FormatError, violations
reported by ``validate``) exit 2, anything else exits 3.
"""


class SpecBenchError(Exception):
    """Base class for all package-specific errors."""


class ParameterError(SpecBenchError, ValueError):
    """An argument value is outside its documented range."""


class DomainError(SpecBenchError, ValueError):
    """Data violates a domain invariant (peak out of range, bad label, ...)."""


class ConfigError(SpecBenchError, ValueError):
    """A configuration is inconsistent or unsatisfiable."""


class FormatError(SpecBenchError, ValueError):
    """A persisted file does not match its documented format."""


class ShapeError(SpecBenchError, ValueError):
    """Array shapes do not line up for the requested operation."""


class TrainingDiverged(SpecBenchError, RuntimeError):
    """Loss became non-finite during training."""

    def __init__(self, epoch: int, batch: int, learning_rate: float):
        self.epoch = epoch
        self.batch = batch
        self.learning_rate = learning_rate
        super().__init__(
            f"non-finite loss at epoch {epoch}, batch {batch}, "
            f"learning rate {learning_rate:g}"
        )
