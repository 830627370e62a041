"""Exception hierarchy shared by all lanesim modules."""


class LanesimError(Exception):
    """Base class for all errors raised by lanesim."""


class DomainError(LanesimError, ValueError):
    """An input lies outside the domain of an operation."""


class SpeedDomainError(DomainError):
    """Speed too low for the speed-scheduled lateral gain."""


class EnvelopeError(DomainError):
    """Pose offset outside the simulator's warp envelope."""


class TrackError(LanesimError, ValueError):
    """Malformed track description (e.g. tangent discontinuity)."""


class ExtrapolationError(DomainError):
    """Ground-truth query for a pose outside the track's domain."""


class DataError(LanesimError):
    """Malformed or inconsistent drive-log data."""


class ControllerError(LanesimError):
    """Controller failed: timeout, protocol violation or bad output."""


class GenerationError(LanesimError):
    """Synthetic log generation diverged."""
