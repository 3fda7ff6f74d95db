"""geopca - Geodesic PCA of one-dimensional probability measures."""

__version__ = "0.1.0"

from .errors import (
    BundleError,
    ConfigError,
    ConvergenceError,
    DegenerateDataError,
    GeoPCAError,
    GridMismatchError,
    IngestError,
    InfeasibleError,
    InvalidMeasureError,
    OutsideDomainError,
)
from .measures import (
    EmpiricalSample,
    GridConfig,
    Histogram,
    QuantileGrid,
    gaussian_quantile,
    quantile_from_histogram,
    quantile_from_location_scale,
    quantile_from_samples,
    wasserstein_distance,
)
from .geometry import (
    ReferenceFrame,
    TangentVector,
    exp_map,
    frechet_functional,
    frechet_mean,
    geodesic_point,
    is_in_V,
    log_map,
    project_onto_V,
)
from .cpca import (
    ConvexSetOracle,
    PrincipalComponents,
    solve_gpcc,
    solve_npcc,
    standard_pca,
)
from .gpca import (
    GeodesicComponents,
    fpca_fit,
    gpca_fit,
    gpca_scores,
    mode_of_variation,
)

__all__ = [
    "BundleError",
    "ConfigError",
    "ConvergenceError",
    "ConvexSetOracle",
    "DegenerateDataError",
    "EmpiricalSample",
    "GeoPCAError",
    "GeodesicComponents",
    "GridConfig",
    "GridMismatchError",
    "Histogram",
    "IngestError",
    "InfeasibleError",
    "InvalidMeasureError",
    "OutsideDomainError",
    "PrincipalComponents",
    "QuantileGrid",
    "ReferenceFrame",
    "TangentVector",
    "exp_map",
    "fpca_fit",
    "frechet_functional",
    "frechet_mean",
    "gaussian_quantile",
    "geodesic_point",
    "gpca_fit",
    "gpca_scores",
    "is_in_V",
    "log_map",
    "mode_of_variation",
    "project_onto_V",
    "quantile_from_histogram",
    "quantile_from_location_scale",
    "quantile_from_samples",
    "solve_gpcc",
    "solve_npcc",
    "standard_pca",
    "wasserstein_distance",
]
