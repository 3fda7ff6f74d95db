"""Quantile-function representation of one-dimensional probability measures.

Every measure is stored as its quantile function sampled at the midpoint knots
t_j = (j - 1/2)/m of (0, 1). Integrals over (0, 1) are taken with the
uniform-weight midpoint rule, so the squared Wasserstein distance between two
measures is the grid average of their squared quantile difference.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.stats import norm

from .errors import GridMismatchError, InvalidMeasureError, OutsideDomainError

logger = logging.getLogger(__name__)

MONOTONE_RTOL = 1e-10
HISTOGRAM_MASS_TOL = 1e-12


def _frozen_array(values: Sequence[float]) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class GridConfig:
    """Midpoint quantile grid with domain bounds Omega = [omega_lo, omega_hi]."""

    m: int
    omega_lo: float = -math.inf
    omega_hi: float = math.inf
    knots: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if int(self.m) != self.m or self.m < 2:
            raise InvalidMeasureError(f"Grid size must be an integer >= 2, got {self.m}")
        if math.isnan(self.omega_lo) or math.isnan(self.omega_hi):
            raise InvalidMeasureError("Domain bounds must not be NaN")
        if not self.omega_lo < self.omega_hi:
            raise InvalidMeasureError(
                f"Empty domain: omega_lo={self.omega_lo} >= omega_hi={self.omega_hi}"
            )
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "knots", _frozen_array((np.arange(self.m) + 0.5) / self.m))

    @property
    def omega(self) -> Tuple[float, float]:
        return self.omega_lo, self.omega_hi

    @property
    def weight(self) -> float:
        """Quadrature weight of every knot."""
        return 1.0 / self.m

    def contains(self, values: np.ndarray) -> bool:
        """Whether all values lie in Omega."""
        values = np.asarray(values, dtype=float)
        return bool(np.all(values >= self.omega_lo) and np.all(values <= self.omega_hi))

    def check_same(self, other: "GridConfig") -> None:
        if self != other:
            raise GridMismatchError(f"Grid mismatch: {self} vs {other}")


def repair_monotone(q: np.ndarray, rtol: float = MONOTONE_RTOL) -> np.ndarray:
    """Running-max repair of decreases within tolerance; larger decreases raise."""
    q = np.asarray(q, dtype=float)
    if q.size < 2:
        return q.copy()
    drops = q[:-1] - q[1:]
    allowed = rtol * (1.0 + np.abs(q[:-1]))
    bad = np.nonzero(drops > allowed)[0]
    if bad.size:
        j = int(bad[0])
        raise InvalidMeasureError(
            f"Quantile values decrease at knot {j}: {q[j]!r} -> {q[j + 1]!r}"
        )
    return np.maximum.accumulate(q)


@dataclass(frozen=True, eq=False)
class QuantileGrid:
    """A probability measure as its quantile function on a GridConfig."""

    grid: GridConfig
    q: np.ndarray

    def __post_init__(self) -> None:
        q = np.asarray(self.q, dtype=float)
        if q.shape != (self.grid.m,):
            raise GridMismatchError(
                f"Expected {self.grid.m} quantile values, got shape {q.shape}"
            )
        if not np.all(np.isfinite(q)):
            raise InvalidMeasureError("Quantile values must be finite")
        q = repair_monotone(q)
        if not self.grid.contains(q):
            raise OutsideDomainError(
                f"Quantiles span [{q[0]}, {q[-1]}], outside Omega {self.grid.omega}"
            )
        object.__setattr__(self, "q", _frozen_array(q))

    @property
    def m(self) -> int:
        return self.grid.m

    @property
    def knots(self) -> np.ndarray:
        return self.grid.knots

    def mean(self) -> float:
        """Expectation of the measure (grid average of the quantile)."""
        return float(np.mean(self.q))

    def second_moment(self) -> float:
        """Grid average of q**2."""
        return float(np.mean(self.q ** 2))

    def allclose(self, other: "QuantileGrid", atol: float = 0.0, rtol: float = 0.0) -> bool:
        return self.grid == other.grid and bool(np.allclose(self.q, other.q, atol=atol, rtol=rtol))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, QuantileGrid):
            return NotImplemented
        return self.grid == other.grid and bool(np.array_equal(self.q, other.q))

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, eq=False)
class EmpiricalSample:
    """Raw observations of one measure."""

    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float).ravel()
        if values.size == 0:
            raise InvalidMeasureError("Empirical sample is empty")
        if not np.all(np.isfinite(values)):
            raise InvalidMeasureError("Empirical sample contains NaN or infinite values")
        object.__setattr__(self, "values", _frozen_array(values))

    def __len__(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True, eq=False)
class Histogram:
    """Piecewise-uniform density: n bins given by n+1 edges and their masses."""

    edges: np.ndarray
    masses: np.ndarray

    def __post_init__(self) -> None:
        edges = np.asarray(self.edges, dtype=float).ravel()
        masses = np.asarray(self.masses, dtype=float).ravel()
        if masses.size == 0 or edges.size != masses.size + 1:
            raise InvalidMeasureError(
                f"Histogram needs n+1 edges for n bins, got {edges.size} edges "
                f"and {masses.size} masses"
            )
        if not np.all(np.isfinite(edges)) or not np.all(np.isfinite(masses)):
            raise InvalidMeasureError("Histogram edges and masses must be finite")
        if np.any(np.diff(edges) <= 0):
            raise InvalidMeasureError("Histogram edges must be strictly increasing")
        if np.any(masses < 0):
            raise InvalidMeasureError("Histogram masses must be nonnegative")
        total = masses.sum()
        if total <= 0:
            raise InvalidMeasureError("Histogram has zero total mass")
        if abs(total - 1.0) > HISTOGRAM_MASS_TOL:
            raise InvalidMeasureError(f"Histogram masses sum to {total!r}, expected 1")
        object.__setattr__(self, "edges", _frozen_array(edges))
        object.__setattr__(self, "masses", _frozen_array(masses))

    @classmethod
    def normalized(cls, edges: Sequence[float], masses: Sequence[float]) -> "Histogram":
        """Build a histogram after dividing masses by their total."""
        masses = np.asarray(masses, dtype=float)
        total = masses.sum()
        if not total > 0:
            raise InvalidMeasureError("Histogram has zero total mass")
        return cls(edges=np.asarray(edges, dtype=float), masses=masses / total)

    @property
    def n_bins(self) -> int:
        return int(self.masses.size)

    def cdf_at_edges(self) -> np.ndarray:
        cdf = np.concatenate(([0.0], np.cumsum(self.masses)))
        cdf[-1] = 1.0
        return cdf


def _check_sample_domain(values: np.ndarray, grid: GridConfig) -> None:
    if not grid.contains(values):
        raise OutsideDomainError(
            f"Sample values span [{values.min()}, {values.max()}], outside Omega {grid.omega}"
        )


def quantile_from_samples(sample: EmpiricalSample, grid: GridConfig) -> QuantileGrid:
    """Empirical quantile inf{x : F_n(x) >= t_j} of the sample at every knot."""
    if not isinstance(sample, EmpiricalSample):
        sample = EmpiricalSample(np.asarray(sample, dtype=float))
    _check_sample_domain(sample.values, grid)
    # inverted_cdf is the left-continuous generalized inverse of the empirical cdf
    q = np.quantile(sample.values, grid.knots, method="inverted_cdf")
    return QuantileGrid(grid, q)


def quantile_from_histogram(hist: Histogram, grid: GridConfig) -> QuantileGrid:
    """Generalized inverse of the piecewise-linear cdf with uniform mass per bin."""
    if not grid.contains(hist.edges):
        raise OutsideDomainError(f"Histogram edges fall outside Omega {grid.omega}")
    support = hist.masses > 0
    cdf = hist.cdf_at_edges()
    left = hist.edges[:-1][support]
    width = np.diff(hist.edges)[support]
    mass = hist.masses[support]
    cdf_left = cdf[:-1][support]
    cdf_right = cdf[1:][support]

    t = grid.knots
    # first positive-mass bin whose right cdf value reaches t
    idx = np.searchsorted(cdf_right, t, side="left")
    idx = np.clip(idx, 0, mass.size - 1)
    frac = np.clip((t - cdf_left[idx]) / mass[idx], 0.0, 1.0)
    q = left[idx] + frac * width[idx]
    return QuantileGrid(grid, q)


def quantile_from_location_scale(base: QuantileGrid, a: float, b: float) -> QuantileGrid:
    """Quantile of the location-scale image x -> a*x + b of the base measure."""
    if not a > 0:
        raise InvalidMeasureError(f"Scale must be positive, got {a}")
    q = a * base.q + b
    if not base.grid.contains(q):
        raise OutsideDomainError(
            f"Location-scale image ({a}, {b}) leaves Omega {base.grid.omega}"
        )
    return QuantileGrid(base.grid, q)


def gaussian_quantile(grid: GridConfig, mean: float = 0.0, sd: float = 1.0) -> QuantileGrid:
    """Quantile grid of N(mean, sd**2)."""
    if not sd > 0:
        raise InvalidMeasureError(f"Standard deviation must be positive, got {sd}")
    return QuantileGrid(grid, mean + sd * norm.ppf(grid.knots))


def wasserstein_distance(x: QuantileGrid, y: QuantileGrid) -> float:
    """Quadratic Wasserstein distance, midpoint rule on the quantile difference."""
    x.grid.check_same(y.grid)
    return float(np.sqrt(np.mean((x.q - y.q) ** 2)))


def implied_cdf(qg: QuantileGrid, x: np.ndarray) -> np.ndarray:
    """Step cdf implied by the knots: #{j : q_j <= x} / m."""
    x = np.asarray(x, dtype=float)
    return np.searchsorted(qg.q, x, side="right") / qg.m


def density_curve(
    qg: QuantileGrid,
    points: int = 512,
    x_range: Optional[Tuple[float, float]] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Density on a uniform x-grid from the piecewise-linear cdf through (q_j, t_j)."""
    lo, hi = x_range if x_range is not None else (float(qg.q[0]), float(qg.q[-1]))
    if not hi > lo:
        raise InvalidMeasureError(
            "Cannot draw a density for a point mass; pass an explicit x_range"
        )
    x = np.linspace(lo, hi, points)
    cdf = np.interp(x, qg.q, qg.knots)
    return x, np.gradient(cdf, x)
