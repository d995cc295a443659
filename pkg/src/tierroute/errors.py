"""Exception types shared across the package."""


class TierRouteError(Exception):
    """Base class for all tierroute errors."""


class TraceFormatError(TierRouteError):
    """A trace file could not be parsed (reports the offending line)."""


class TraceValidationError(TierRouteError):
    """A parsed trace violates a schema invariant (reports the record id)."""


class MissingScoreError(TierRouteError):
    """A record lacks the score required by its labeling regime."""


class DimensionMismatchError(TierRouteError):
    """An embedding's length does not match the expected dimension."""


class ConfigError(TierRouteError):
    """A user-supplied configuration is invalid."""


class TrainingDivergedError(TierRouteError):
    """Non-finite loss encountered during predictor training."""


class GpFitError(TierRouteError):
    """Kernel matrix factorization failed even with maximum jitter."""


class CorruptStateError(TierRouteError):
    """A router state is missing entries it should hold for every cluster."""


class BundleIntegrityError(TierRouteError):
    """A router bundle failed its checksum or is structurally incomplete."""
