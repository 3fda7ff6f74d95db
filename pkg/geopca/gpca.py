"""Geodesic PCA in Wasserstein space, run as convex PCA on log-mapped data.

The data are mapped to the tangent space at a reference measure (the
barycenter by default), where the image of Wasserstein space is the convex
set V_mu(Omega). Principal convex components found there map back through
exp to principal geodesics.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .config import SolverOptions
from .cpca import (
    HilbertSpace,
    PrincipalComponents,
    project_onto_span_cap_X,
    solve_gpcc,
    solve_npcc,
    standard_pca,
)
from .errors import ConfigError, DegenerateDataError, GridMismatchError, InvalidMeasureError
from .geometry import (
    ReferenceFrame,
    TangentVector,
    exp_map,
    feasible_interval,
    frechet_mean,
    log_map,
)
from .measures import (
    QuantileGrid,
    density_curve,
    quantile_from_location_scale,
    wasserstein_distance,
)

logger = logging.getLogger(__name__)

GPCA_METHODS = ("gpca-global", "gpca-nested")


@dataclass(frozen=True, eq=False)
class GeodesicComponents:
    """Principal geodesics: components in tangent coordinates at ``frame``."""

    frame: ReferenceFrame
    pcs: PrincipalComponents
    barycenter: QuantileGrid
    method: str = "gpca-global"

    @property
    def n_components(self) -> int:
        return self.pcs.k

    @property
    def directions(self) -> np.ndarray:
        return self.pcs.directions

    @property
    def x0(self) -> np.ndarray:
        return self.pcs.reference

    @property
    def cost(self) -> float:
        """Mean squared Wasserstein residual of the fitted data."""
        return self.pcs.residual_cost

    def _check_component(self, component: int) -> None:
        if not 0 <= component < self.n_components:
            raise IndexError(
                f"Component {component} out of range (0..{self.n_components - 1})"
            )

    def mode_range(self, component: int) -> Tuple[float, float]:
        """Interval of t for which x0 + t * u stays in V_mu(Omega)."""
        self._check_component(component)
        point = TangentVector(self.frame, self.x0)
        direction = TangentVector(self.frame, self.directions[component])
        return feasible_interval(self.frame, point, direction)


def _log_matrix(frame: ReferenceFrame, data: Sequence[QuantileGrid]) -> np.ndarray:
    return np.vstack([log_map(frame, nu).v for nu in data])


def gpca_fit(
    data: Sequence[QuantileGrid],
    k: int,
    opts: Optional[SolverOptions] = None,
    method: str = "gpca-global",
    reference: Optional[QuantileGrid] = None,
) -> GeodesicComponents:
    """Fit k principal geodesics (global or nested) to the data."""
    if method not in GPCA_METHODS:
        raise ConfigError(f"Unknown GPCA method: {method!r}")
    if len(data) < 2:
        raise DegenerateDataError("GPCA needs at least two measures")
    if k < 1:
        raise DegenerateDataError("Number of components must be at least 1")

    barycenter = frechet_mean(data)
    if reference is None:
        frame = ReferenceFrame.from_quantile(barycenter, repair=True)
    else:
        barycenter.grid.check_same(reference.grid)
        frame = ReferenceFrame(reference)

    x0 = log_map(frame, barycenter).v
    logs = _log_matrix(frame, data)
    space = HilbertSpace(frame.grid.m, frame.grid.weight)
    solver = solve_npcc if method == "gpca-nested" else solve_gpcc
    pcs = solver(logs, x0, k, frame.convex_oracle(), opts, space)
    logger.info(
        "GPCA: n=%d k=%d strategy=%s status=%s cost=%.6g",
        len(data), pcs.k, pcs.strategy, pcs.status, pcs.residual_cost,
    )
    return GeodesicComponents(frame=frame, pcs=pcs, barycenter=barycenter, method=method)


def mode_of_variation(gc: GeodesicComponents, component: int, t: float) -> QuantileGrid:
    """exp_mu(x0 + t * u_component), t clamped to the feasible interval."""
    t_lo, t_hi = gc.mode_range(component)
    clamped = float(np.clip(t, t_lo, t_hi))
    if clamped != t:
        logger.warning(
            "Mode %d: t=%g outside feasible range [%g, %g]; clamped to %g",
            component, t, t_lo, t_hi, clamped,
        )
    v = TangentVector(gc.frame, gc.x0 + clamped * gc.directions[component])
    return exp_map(gc.frame, v)


def gpca_scores(gc: GeodesicComponents, data: Sequence[QuantileGrid]) -> np.ndarray:
    """score[i, j] = <log_mu(data_i) - x0, u_j>_mu."""
    if len(data) == 0:
        return np.zeros((0, gc.n_components))
    logs = _log_matrix(gc.frame, data)
    return gc.frame.grid.weight * ((logs - gc.x0) @ gc.directions.T)


def gpca_cost(
    gc: GeodesicComponents,
    data: Sequence[QuantileGrid],
    opts: Optional[SolverOptions] = None,
) -> float:
    """Mean squared Wasserstein distance of the data to the fitted geodesic set.

    Each datum is projected in tangent coordinates, mapped back with exp and
    measured in Wasserstein space.
    """
    if len(data) == 0:
        raise DegenerateDataError("No measures given")
    oracle = gc.frame.convex_oracle()
    space = HilbertSpace(gc.frame.grid.m, gc.frame.grid.weight)
    total = 0.0
    for nu in data:
        v = log_map(gc.frame, nu).v
        p = project_onto_span_cap_X(v, gc.x0, gc.directions, oracle, space, opts)
        total += wasserstein_distance(nu, exp_map(gc.frame, TangentVector(gc.frame, p))) ** 2
    return total / len(data)


# ============ FUNCTIONAL PCA ============


@dataclass(frozen=True, eq=False)
class FunctionalComponents:
    """Linear PCA of densities in L2(dx) on a common uniform x-grid."""

    x: np.ndarray
    densities: np.ndarray
    mean_density: np.ndarray
    pcs: PrincipalComponents

    @property
    def explained_ratios(self) -> np.ndarray:
        return self.pcs.explained_ratios

    def linear_mode(self, component: int, t: float) -> np.ndarray:
        """g_t = mean + t * sigma_j * w_j; may leave the set of densities."""
        if not 0 <= component < self.pcs.k:
            raise IndexError(f"Component {component} out of range (0..{self.pcs.k - 1})")
        sigma = np.sqrt(self.pcs.eigenvalues[component])
        return self.mean_density + t * sigma * self.pcs.directions[component]


def densities_on_common_grid(
    data: Sequence[QuantileGrid], points: int = 512
) -> Tuple[np.ndarray, np.ndarray]:
    """Density vectors of every measure on one uniform grid spanning all supports."""
    if len(data) == 0:
        raise DegenerateDataError("No measures given")
    lo = min(float(nu.q[0]) for nu in data)
    hi = max(float(nu.q[-1]) for nu in data)
    curves = [density_curve(nu, points, (lo, hi)) for nu in data]
    return curves[0][0], np.vstack([f for _, f in curves])


def fpca_fit(
    data: Union[Sequence[QuantileGrid], np.ndarray],
    k: int,
    x: Optional[np.ndarray] = None,
    points: int = 512,
) -> FunctionalComponents:
    """Standard PCA of density vectors around their Euclidean mean.

    ``data`` is either a list of quantile grids (densities are derived on a
    ``points``-long uniform grid) or an ``(n, p)`` density matrix sampled at
    the uniform grid ``x``.
    """
    if isinstance(data, np.ndarray):
        densities = np.atleast_2d(np.asarray(data, dtype=float))
        if x is None:
            raise GridMismatchError("Density matrix input needs its x-grid")
        x = np.asarray(x, dtype=float)
        if x.shape != (densities.shape[1],):
            raise GridMismatchError(
                f"x-grid has {x.size} points, densities have {densities.shape[1]} columns"
            )
    else:
        x, densities = densities_on_common_grid(data, points)
    steps = np.diff(x)
    if x.size < 2 or steps[0] <= 0 or not np.allclose(steps, steps[0]):
        raise GridMismatchError("Density x-grid must be uniform and increasing")

    mean_density = densities.mean(axis=0)
    space = HilbertSpace(x.size, float(steps[0]))
    pcs = standard_pca(densities, mean_density, k, space)
    logger.info("FPCA: n=%d p=%d explained=%s", densities.shape[0], x.size, np.round(pcs.explained_ratios, 4))
    return FunctionalComponents(x=x, densities=densities, mean_density=mean_density, pcs=pcs)


# ============ CONSISTENCY SIMULATION ============

Sampler = Callable[[np.random.Generator, int], List[QuantileGrid]]


def location_scale_sampler(
    base: QuantileGrid,
    a_range: Tuple[float, float] = (0.5, 1.5),
    b_range: Tuple[float, float] = (-1.0, 1.0),
) -> Sampler:
    """Random measures a*X + b with X ~ base, a and b uniform on their ranges."""
    if not 0 < a_range[0] <= a_range[1]:
        raise InvalidMeasureError(f"Scale range must be positive, got {a_range}")

    def sample(rng: np.random.Generator, n: int) -> List[QuantileGrid]:
        a = rng.uniform(*a_range, size=n)
        b = rng.uniform(*b_range, size=n)
        return [quantile_from_location_scale(base, ai, bi) for ai, bi in zip(a, b)]

    return sample


def location_scale_population(
    base: QuantileGrid,
    a_range: Tuple[float, float] = (0.5, 1.5),
    b_range: Tuple[float, float] = (-1.0, 1.0),
    k: int = 1,
    draws: int = 100_000,
    seed: int = 0,
) -> Tuple[QuantileGrid, float]:
    """Population barycenter and Monte-Carlo estimate of the optimal k-cost.

    Logs at the population barycenter are (a - Ea) q + (b - Eb), a
    two-dimensional family; the cost is the sum of the covariance eigenvalues
    beyond the first k. Assumes the projections stay inside V (true when
    a_range is bounded away from 0 and Omega is wide enough).
    """
    a_mean = 0.5 * (a_range[0] + a_range[1])
    b_mean = 0.5 * (b_range[0] + b_range[1])
    barycenter = quantile_from_location_scale(base, a_mean, b_mean)

    rng = np.random.default_rng(seed)
    coeffs = np.column_stack([rng.uniform(*a_range, draws), rng.uniform(*b_range, draws)])
    cov = np.cov(coeffs, rowvar=False, bias=True)
    basis = np.vstack([base.q, np.ones(base.m)])
    gram = basis @ basis.T / base.m
    w, vecs = np.linalg.eigh(gram)
    root = vecs @ np.diag(np.sqrt(np.maximum(w, 0.0))) @ vecs.T
    eigenvalues = np.sort(np.linalg.eigvalsh(root @ cov @ root))[::-1]
    return barycenter, float(np.sum(eigenvalues[k:]))


@dataclass
class ConsistencyReport:
    """Per-trial barycenter errors and fitted costs for every sample size."""

    n_schedule: List[int]
    barycenter_errors: np.ndarray
    costs: np.ndarray
    population_cost: Optional[float] = None
    k: int = 1
    seed: int = 0

    @property
    def median_errors(self) -> np.ndarray:
        return np.median(self.barycenter_errors, axis=1)

    @property
    def median_costs(self) -> np.ndarray:
        return np.median(self.costs, axis=1)

    def rows(self) -> List[Tuple[int, float, float]]:
        return [
            (n, float(e), float(c))
            for n, e, c in zip(self.n_schedule, self.median_errors, self.median_costs)
        ]


def _run_trial(
    sampler: Sampler,
    population_barycenter: QuantileGrid,
    n: int,
    k: int,
    seed_seq: np.random.SeedSequence,
    opts: Optional[SolverOptions],
) -> Tuple[float, float]:
    rng = np.random.default_rng(seed_seq)
    data = sampler(rng, n)
    gc = gpca_fit(data, k, opts)
    return wasserstein_distance(gc.barycenter, population_barycenter), gc.cost


def consistency_experiment(
    sampler: Sampler,
    population_barycenter: QuantileGrid,
    n_schedule: Sequence[int] = (25, 100, 400),
    trials: int = 50,
    k: int = 1,
    seed: int = 0,
    opts: Optional[SolverOptions] = None,
    population_cost: Optional[float] = None,
    max_workers: Optional[int] = None,
) -> ConsistencyReport:
    """Barycenter error and empirical cost over growing sample sizes.

    Every (n, trial) pair draws from its own child seed, so results do not
    depend on how trials are scheduled across workers.
    """
    if trials < 1 or not n_schedule:
        raise DegenerateDataError("Need at least one trial and one sample size")
    children = np.random.SeedSequence(seed).spawn(len(n_schedule) * trials)
    jobs = [
        (n, children[i * trials + j])
        for i, n in enumerate(n_schedule)
        for j in range(trials)
    ]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        results = list(
            pool.map(
                lambda job: _run_trial(sampler, population_barycenter, job[0], k, job[1], opts),
                jobs,
            )
        )
    values = np.array(results, dtype=float).reshape(len(n_schedule), trials, 2)
    report = ConsistencyReport(
        n_schedule=list(n_schedule),
        barycenter_errors=values[:, :, 0],
        costs=values[:, :, 1],
        population_cost=population_cost,
        k=k,
        seed=seed,
    )
    for n, err, cost in report.rows():
        logger.info("Consistency: n=%d median d_W=%.4g median cost=%.4g", n, err, cost)
    return report
