"""Exception types shared across the pipeline.

The CLI maps :class:`DataError` subclasses to exit code 2 and
:class:`NumericalError` subclasses to exit code 3.
"""


class DataError(ValueError):
    """Malformed or inconsistent input data."""


class FormatError(DataError):
    """A file does not match its schema."""


class AlignmentError(DataError):
    """Two condition sets that must match do not."""


class SamplingError(DataError):
    """Nothing to sample from."""


class NumericalError(RuntimeError):
    """A numerical procedure failed."""


class EquilibriumError(NumericalError):
    """Static equilibrium could not be found."""


class ModelRangeError(NumericalError):
    """A pose or state left the validity range of the hydrodynamic model."""


class IntegrationError(NumericalError):
    """Non-finite values appeared during time integration."""

    def __init__(self, message: str, time: float | None = None):
        super().__init__(message if time is None else f"{message} (t={time:.6g} s)")
        self.time = time


class GradientError(NumericalError):
    """Non-finite intermediate during backpropagation."""


class TrainingDiverged(NumericalError):
    """Training loss exceeded the divergence threshold."""

    def __init__(self, message: str, history):
        super().__init__(message)
        self.history = history


class StandardizationError(DataError):
    """A channel has zero variance."""


class AmbiguityError(DataError):
    """A request has no unique answer (e.g. antipodal route endpoints)."""
