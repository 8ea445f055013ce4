"""Exception hierarchy shared by all rydline modules."""


class RydlineError(Exception):
    """Base class for every error raised by this package."""


class DomainError(RydlineError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class GridError(DomainError):
    """A frequency grid is not uniform (or not aligned to its spacing)."""


class FormatError(RydlineError, ValueError):
    """Malformed text input (spectrum tables, configs, binary dumps)."""


class SymmetryError(RydlineError, ValueError):
    """A sampled spectrum violates conjugate symmetry."""


class DegenerateSignalError(RydlineError, ValueError):
    """Statistic undefined because the signal has zero variance."""


class CoverageError(RydlineError, ValueError):
    """The noise signal is shorter than the evolution it should drive."""


class IntegrationError(RydlineError, RuntimeError):
    """Propagation lost unitarity beyond tolerance."""


class GroundStateEnergyError(DomainError):
    """Target energy at or below the ground state: beta would be +inf."""


class NegativeTemperatureError(DomainError):
    """Target energy at or above the spectral mean: beta would be <= 0."""


class CapacityError(RydlineError, ValueError):
    """Requested system size exceeds the state-vector capacity."""
