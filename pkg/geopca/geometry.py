"""Tangent-space geometry of the Wasserstein space at a reference measure.

On the midpoint grid the log map at mu is the quantile difference
nu.q - mu.q, the inner product is the uniform grid average, and
V_mu(Omega) is the set of tangent vectors v such that mu.q + v is
nondecreasing with values in Omega.
"""

import logging
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .cpca import ConvexSetOracle, isotonic_box_interval
from .errors import DegenerateDataError, GridMismatchError, InvalidMeasureError
from .measures import GridConfig, QuantileGrid

logger = logging.getLogger(__name__)

STRICT_RTOL = 1e-12
FLAT_PERTURBATION = 1e-9


def _frozen(values: np.ndarray) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


def is_strictly_increasing(q: np.ndarray, rtol: float = STRICT_RTOL) -> bool:
    q = np.asarray(q, dtype=float)
    return bool(np.all(np.diff(q) > rtol * (1.0 + np.abs(q[:-1]))))


@dataclass(frozen=True, eq=False)
class ReferenceFrame:
    """An atomless reference measure mu: its quantile strictly increases."""

    mu: QuantileGrid

    def __post_init__(self) -> None:
        if not is_strictly_increasing(self.mu.q):
            raise DegenerateDataError(
                "Reference measure must have a strictly increasing quantile function"
            )

    @classmethod
    def from_quantile(cls, mu: QuantileGrid, repair: bool = False) -> "ReferenceFrame":
        """Frame at mu; with repair, flat stretches are tilted by eps * t_j.

        eps is at least FLAT_PERTURBATION * range, and large enough that every
        knot step of eps / m clears the strictness threshold at the size of q.
        """
        if repair and not is_strictly_increasing(mu.q):
            span = float(mu.q[-1] - mu.q[0])
            if span <= 0:
                raise DegenerateDataError("Reference measure is a point mass")
            scale = 1.0 + float(np.max(np.abs(mu.q))) + span
            eps = max(FLAT_PERTURBATION * span, 4.0 * mu.grid.m * STRICT_RTOL * scale)
            q = mu.q + eps * mu.knots
            lo, hi = mu.grid.omega
            if q[-1] > hi:
                q = mu.q - eps * (1.0 - mu.knots)
            if q[0] < lo or q[-1] > hi:
                raise DegenerateDataError("Cannot tilt flat reference measure inside Omega")
            logger.warning(
                "Reference measure has flat stretches; perturbed by %.3g * t_j", eps
            )
            mu = QuantileGrid(mu.grid, q)
            if not is_strictly_increasing(mu.q):
                raise DegenerateDataError(
                    "Reference measure is still flat after the tilt; refine the data or the grid"
                )
        return cls(mu)

    @property
    def grid(self) -> GridConfig:
        return self.mu.grid

    def check_grid(self, grid: GridConfig) -> None:
        if self.grid != grid:
            raise GridMismatchError(f"Frame grid {self.grid} does not match {grid}")

    def convex_oracle(self) -> ConvexSetOracle:
        """V_mu(Omega) as a convex-set oracle in tangent coordinates."""
        lo, hi = self.grid.omega
        return ConvexSetOracle.isotonic_box(self.mu.q, lo, hi)


@dataclass(frozen=True, eq=False)
class TangentVector:
    """Element of L2_mu on the grid, v[j] ~ log_mu(nu)(F_mu^-(t_j))."""

    frame: ReferenceFrame
    v: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.v, dtype=float)
        if v.shape != (self.frame.grid.m,):
            raise GridMismatchError(
                f"Tangent vector needs {self.frame.grid.m} entries, got shape {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise InvalidMeasureError("Tangent vector entries must be finite")
        object.__setattr__(self, "v", _frozen(v))

    def norm(self) -> float:
        return tangent_norm(self.v)

    def inner(self, other: "TangentVector") -> float:
        return tangent_inner(self.v, other.v)

    def __add__(self, other: "TangentVector") -> "TangentVector":
        return TangentVector(self.frame, self.v + other.v)

    def __sub__(self, other: "TangentVector") -> "TangentVector":
        return TangentVector(self.frame, self.v - other.v)

    def __mul__(self, scalar: float) -> "TangentVector":
        return TangentVector(self.frame, scalar * self.v)

    __rmul__ = __mul__


def tangent_inner(u: np.ndarray, v: np.ndarray) -> float:
    return float(np.mean(np.asarray(u) * np.asarray(v)))


def tangent_norm(v: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.asarray(v) ** 2)))


def log_map(frame: ReferenceFrame, nu: QuantileGrid) -> TangentVector:
    """log_mu(nu) evaluated at the knots of mu: the quantile difference."""
    frame.check_grid(nu.grid)
    return TangentVector(frame, nu.q - frame.mu.q)


def exp_map(frame: ReferenceFrame, v: TangentVector) -> QuantileGrid:
    """exp_mu(v) = (id + v) # mu; v must lie in V_mu(Omega)."""
    if not is_in_V(frame, v):
        raise InvalidMeasureError(
            "Tangent vector lies outside V_mu(Omega); project it first"
        )
    lo, hi = frame.grid.omega
    # membership tolerates rounding at the walls of Omega; snap back inside
    return QuantileGrid(frame.grid, np.clip(frame.mu.q + v.v, lo, hi))


def is_in_V(frame: ReferenceFrame, v: TangentVector) -> bool:
    """Whether mu.q + v is nondecreasing (within tolerance) and inside Omega."""
    frame.check_grid(v.frame.grid)
    return frame.convex_oracle().membership(v.v)


def project_onto_V(frame: ReferenceFrame, w: TangentVector) -> TangentVector:
    """Metric projection onto V_mu(Omega): isotonic regression, then clamp to Omega."""
    frame.check_grid(w.frame.grid)
    return TangentVector(frame, frame.convex_oracle().project(w.v))


def feasible_interval(
    frame: ReferenceFrame, point: TangentVector, direction: TangentVector
) -> Tuple[float, float]:
    """Interval of t such that point + t * direction lies in V_mu(Omega)."""
    lo, hi = frame.grid.omega
    return isotonic_box_interval(frame.mu.q, point.v, direction.v, lo, hi)


def geodesic_point(
    frame: ReferenceFrame, nu0: QuantileGrid, nu1: QuantileGrid, t: float
) -> QuantileGrid:
    """Point at time t on the geodesic from nu0 to nu1 (quantile interpolation)."""
    if not 0.0 <= t <= 1.0:
        raise InvalidMeasureError(f"Geodesic time must lie in [0, 1], got {t}")
    frame.check_grid(nu0.grid)
    nu0.grid.check_same(nu1.grid)
    if t == 0.0:
        return nu0
    if t == 1.0:
        return nu1
    return QuantileGrid(nu0.grid, (1.0 - t) * nu0.q + t * nu1.q)


def _stack(data: Sequence[QuantileGrid]) -> Tuple[GridConfig, np.ndarray]:
    if len(data) == 0:
        raise DegenerateDataError("No measures given")
    grid = data[0].grid
    for nu in data[1:]:
        grid.check_same(nu.grid)
    return grid, np.vstack([nu.q for nu in data])


def frechet_mean(data: Sequence[QuantileGrid]) -> QuantileGrid:
    """Wasserstein barycenter: the knot-wise average of quantile functions."""
    grid, stacked = _stack(data)
    if len(data) == 1:
        return data[0]
    return QuantileGrid(grid, stacked.mean(axis=0))


def frechet_functional(data: Sequence[QuantileGrid], nu: QuantileGrid) -> float:
    """Mean squared Wasserstein distance from the data to nu."""
    grid, stacked = _stack(data)
    grid.check_same(nu.grid)
    return float(np.mean((stacked - nu.q) ** 2))
