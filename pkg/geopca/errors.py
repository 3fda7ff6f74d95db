"""Exception hierarchy for geopca."""

from typing import Optional


class GeoPCAError(Exception):
    """Base class for every error raised by geopca."""


class InvalidMeasureError(GeoPCAError):
    """A quantile grid, sample or histogram breaks its invariants."""


class OutsideDomainError(InvalidMeasureError):
    """Values fall outside the domain bounds Omega."""


class GridMismatchError(GeoPCAError):
    """Two objects live on different quantile grids."""


class DegenerateDataError(GeoPCAError):
    """The data carry no variability (or the reference frame is flat)."""


class ConvergenceError(GeoPCAError):
    """An iterative solver hit its iteration cap."""

    def __init__(self, message: str, last_gap: Optional[float] = None):
        super().__init__(message)
        self.last_gap = last_gap


class IngestError(GeoPCAError):
    """Malformed input file or manifest."""


class BundleError(GeoPCAError):
    """Quantile bundle is corrupt, inconsistent or of the wrong version."""


class ConfigError(GeoPCAError):
    """Run configuration failed validation."""


class InfeasibleError(GeoPCAError):
    """A point or line does not meet the convex constraint set."""
