"""Exception types shared across the package."""


class DomainError(ValueError):
    """A state lies outside the admissible domain (coincident particles, infinite energy)."""


class UnsupportedModelError(ValueError):
    """The requested operation needs structure the potential model does not have."""


class EstimationError(RuntimeError):
    """Sampling-based constant estimation could not establish a required property."""


class PlanningError(RuntimeError):
    """Control synthesis failed to find an admissible path."""


class SimulationStuckError(RuntimeError):
    """An integrator exceeded the consecutive-rejection budget."""
