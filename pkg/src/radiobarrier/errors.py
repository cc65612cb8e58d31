"""Exception types shared across the package."""


class RadioBarrierError(Exception):
    """Base class for package-specific errors."""


class ConfigurationError(RadioBarrierError):
    """Invalid layout, vehicle, channel or simulation configuration."""


class InputDataError(RadioBarrierError):
    """Malformed or insufficient input data (streams, datasets, tables)."""


class EstimationError(RadioBarrierError):
    """Speed or length estimation is not possible for the given segment."""


class TrainingError(RadioBarrierError):
    """Classifier training failed or did not converge."""
