"""Exception types shared across the simulator."""


class UavFedError(Exception):
    """Base class for all simulator errors."""


class InvalidConfigError(UavFedError):
    """A configuration value is missing, malformed, or out of range."""


class ZeroRateError(UavFedError):
    """A link rate of 0 bit/s makes a transfer latency undefined (unreachable device)."""


class EmptySelectionError(UavFedError):
    """A per-round cost was requested over an empty device selection."""


class EmptyDatasetError(UavFedError):
    """Loss/accuracy requested on an empty dataset."""


class EmptyContributionError(UavFedError):
    """Aggregation requested with no contributors."""


class ShapeMismatchError(UavFedError):
    """Parameter vectors or layer shapes do not line up."""


class NonFiniteGradientError(UavFedError):
    """A gradient or updated parameter went NaN/Inf; the run aborts with diagnostics."""
