"""Convex-constrained PCA in a finite-dimensional weighted inner-product space.

Points are coordinate vectors of length ``dim``; the inner product is
``weight * x.y``. Data sets are stacked row-wise into ``(n, dim)`` arrays.
The constraint set X is described by a :class:`ConvexSetOracle`. All oracles
shipped here compute Euclidean projections, which coincide with the weighted
metric projection because the weight is uniform.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import svd
from scipy.optimize import minimize, minimize_scalar
from sklearn.isotonic import isotonic_regression

from .config import SolverOptions
from .errors import ConvergenceError, DegenerateDataError, InfeasibleError

logger = logging.getLogger(__name__)

MONOTONE_RTOL = 1e-10
RANK_RTOL = 1e-12
COST_TIE_RTOL = 1e-12
ARMIJO = 1e-4


# ============ SPACE AND POINTS ============


@dataclass(frozen=True)
class HilbertSpace:
    """R^dim with inner product weight * x.y (weight defaults to 1/dim)."""

    dim: int
    weight: Optional[float] = None

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise DegenerateDataError("Space dimension must be positive")
        if self.weight is None:
            object.__setattr__(self, "weight", 1.0 / self.dim)
        if not self.weight > 0:
            raise DegenerateDataError("Inner-product weight must be positive")

    def inner(self, x: np.ndarray, y: np.ndarray) -> Union[float, np.ndarray]:
        return self.weight * (np.asarray(x) @ np.asarray(y).T)

    def norm(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        return float(np.sqrt(self.weight * np.dot(x, x)))

    def sq_dist_rows(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Squared distances between matching rows."""
        diff = np.atleast_2d(a) - np.atleast_2d(b)
        return self.weight * np.sum(diff * diff, axis=1)


@dataclass(frozen=True, eq=False)
class HilbertPoint:
    """One point of a HilbertSpace."""

    coords: np.ndarray
    weight: float

    def __post_init__(self) -> None:
        coords = np.array(self.coords, dtype=float)
        if coords.ndim != 1 or not np.all(np.isfinite(coords)):
            raise DegenerateDataError("HilbertPoint needs a finite coordinate vector")
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)

    def inner(self, other: "HilbertPoint") -> float:
        return float(self.weight * np.dot(self.coords, other.coords))

    def norm(self) -> float:
        return float(np.sqrt(self.inner(self)))


PointsLike = Union[np.ndarray, Sequence[HilbertPoint], Sequence[np.ndarray]]


def as_matrix(
    data: PointsLike, space: Optional[HilbertSpace] = None
) -> Tuple[np.ndarray, HilbertSpace]:
    """Stack points row-wise and settle the space they live in."""
    weight = None
    if isinstance(data, np.ndarray):
        matrix = np.atleast_2d(np.asarray(data, dtype=float))
    else:
        rows = []
        for point in data:
            if isinstance(point, HilbertPoint):
                weight = point.weight if weight is None else weight
                rows.append(point.coords)
            else:
                rows.append(np.asarray(point, dtype=float))
        if not rows:
            raise DegenerateDataError("No data points given")
        matrix = np.vstack(rows)
    if matrix.shape[0] == 0:
        raise DegenerateDataError("No data points given")
    if space is None:
        space = HilbertSpace(matrix.shape[1], weight)
    if matrix.shape[1] != space.dim:
        raise DegenerateDataError(
            f"Points have dimension {matrix.shape[1]}, space has {space.dim}"
        )
    return matrix, space


def _as_vector(x: Union[np.ndarray, HilbertPoint]) -> np.ndarray:
    if isinstance(x, HilbertPoint):
        return np.asarray(x.coords, dtype=float)
    return np.asarray(x, dtype=float)


def _as_directions(U: PointsLike, dim: int) -> np.ndarray:
    if isinstance(U, np.ndarray):
        directions = np.asarray(U, dtype=float)
        if directions.ndim == 1:
            directions = directions[None, :]
        return directions.reshape(-1, dim)
    if len(U) == 0:
        return np.zeros((0, dim))
    return np.vstack([_as_vector(u) for u in U])


# ============ CONVEX SETS ============


def project_isotonic_box(y: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Nearest nondecreasing vector with entries in [lo, hi], uniform weights.

    Pool-adjacent-violators followed by clamping; clamping a uniform-weight
    isotonic fit stays optimal under box constraints.
    """
    fitted = isotonic_regression(np.asarray(y, dtype=float), increasing=True)
    return np.clip(fitted, lo, hi)


def is_isotonic_box(y: np.ndarray, lo: float, hi: float, rtol: float = MONOTONE_RTOL) -> bool:
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        return False
    drops = y[:-1] - y[1:]
    if np.any(drops > rtol * (1.0 + np.abs(y[:-1]))):
        return False
    slack = rtol * (1.0 + np.abs(y))
    return bool(np.all(y >= lo - slack) and np.all(y <= hi + slack))


def _tighten(t_lo: float, t_hi: float, coef: np.ndarray, rhs: np.ndarray) -> Tuple[float, float]:
    """Intersect [t_lo, t_hi] with {t : coef * t >= rhs} row by row."""
    pos = coef > 0
    neg = coef < 0
    if np.any(pos):
        t_lo = max(t_lo, float(np.max(rhs[pos] / coef[pos])))
    if np.any(neg):
        t_hi = min(t_hi, float(np.min(rhs[neg] / coef[neg])))
    return t_lo, t_hi


def _settle_interval(t_lo: float, t_hi: float) -> Tuple[float, float]:
    if t_lo > t_hi:
        # the base point sits on the boundary up to rounding
        mid = 0.5 * (t_lo + t_hi)
        if t_lo - t_hi > 1e-9 * (1.0 + abs(mid)):
            raise InfeasibleError("Line does not meet the constraint set")
        return mid, mid
    return t_lo, t_hi


def isotonic_box_interval(
    base: np.ndarray,
    point: np.ndarray,
    direction: np.ndarray,
    lo: float,
    hi: float,
) -> Tuple[float, float]:
    """{t : base + point + t*direction nondecreasing and inside [lo, hi]}."""
    y = np.asarray(base, dtype=float) + np.asarray(point, dtype=float)
    d = np.asarray(direction, dtype=float)
    t_lo, t_hi = _tighten(-np.inf, np.inf, np.diff(d), -np.diff(y))
    if np.isfinite(lo):
        t_lo, t_hi = _tighten(t_lo, t_hi, d, lo - y)
    if np.isfinite(hi):
        t_lo, t_hi = _tighten(t_lo, t_hi, -d, y - hi)
    return _settle_interval(t_lo, t_hi)


def isotonic_box_constraints(
    base: np.ndarray,
    point: np.ndarray,
    directions: np.ndarray,
    lo: float,
    hi: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """Rows (A, b) with base + point + c @ directions admissible iff A c >= b.

    Once the sum is nondecreasing only its first and last entries can
    leave [lo, hi], so two bound rows suffice.
    """
    y = np.asarray(base, dtype=float) + np.asarray(point, dtype=float)
    U = np.atleast_2d(np.asarray(directions, dtype=float))
    rows = [np.diff(U, axis=1).T]
    rhs = [-np.diff(y)]
    if np.isfinite(lo):
        rows.append(U[:, :1].T)
        rhs.append(np.array([lo - y[0]]))
    if np.isfinite(hi):
        rows.append(-U[:, -1:].T)
        rhs.append(np.array([y[-1] - hi]))
    return np.vstack(rows), np.concatenate(rhs)


@dataclass(frozen=True)
class ConvexSetOracle:
    """Closed convex set X given by membership test and metric projection.

    ``line_interval(point, direction)`` optionally returns the closed interval
    of t with point + t*direction in X; when present, one-dimensional
    subspace projections are solved in closed form.

    ``linear_constraints(point, directions)`` optionally returns rows (A, b)
    with point + c @ directions in X iff A c >= b. Polyhedral sets that
    provide it get exact subspace projections for any number of directions.
    """

    membership: Callable[[np.ndarray], bool]
    project: Callable[[np.ndarray], np.ndarray]
    line_interval: Optional[Callable[[np.ndarray, np.ndarray], Tuple[float, float]]] = None
    linear_constraints: Optional[
        Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]
    ] = None
    name: str = "custom"

    @classmethod
    def whole_space(cls) -> "ConvexSetOracle":
        return cls(
            membership=lambda x: bool(np.all(np.isfinite(x))),
            project=lambda x: np.array(x, dtype=float),
            line_interval=lambda p, d: (-np.inf, np.inf),
            linear_constraints=lambda p, U: (np.zeros((0, np.atleast_2d(U).shape[0])), np.zeros(0)),
            name="whole_space",
        )

    @classmethod
    def half_space(cls, normal: Sequence[float], offset: float) -> "ConvexSetOracle":
        """{x : normal . x >= offset}."""
        a = np.asarray(normal, dtype=float)
        aa = float(a @ a)
        if aa == 0:
            raise DegenerateDataError("Half-space normal must be nonzero")

        def project(x: np.ndarray) -> np.ndarray:
            x = np.array(x, dtype=float)
            deficit = offset - float(a @ x)
            if deficit > 0:
                x = x + (deficit / aa) * a
            return x

        def interval(point: np.ndarray, direction: np.ndarray) -> Tuple[float, float]:
            coef = np.array([float(a @ direction)])
            rhs = np.array([offset - float(a @ point)])
            if coef[0] == 0:
                if rhs[0] > 1e-12 * (1.0 + abs(offset)):
                    raise InfeasibleError("Line does not meet the half-space")
                return -np.inf, np.inf
            return _settle_interval(*_tighten(-np.inf, np.inf, coef, rhs))

        def constraints(point: np.ndarray, directions: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
            rows = (np.atleast_2d(directions) @ a)[None, :]
            return rows, np.array([offset - float(a @ point)])

        tol = 1e-12 * (1.0 + abs(offset))
        return cls(
            membership=lambda x: bool(float(a @ np.asarray(x)) >= offset - tol),
            project=project,
            line_interval=interval,
            linear_constraints=constraints,
            name="half_space",
        )

    @classmethod
    def isotonic_box(cls, base: np.ndarray, lo: float = -np.inf, hi: float = np.inf) -> "ConvexSetOracle":
        """{v : base + v nondecreasing with entries in [lo, hi]}."""
        base = np.array(base, dtype=float)
        base.setflags(write=False)
        return cls(
            membership=lambda v: is_isotonic_box(base + np.asarray(v), lo, hi),
            project=lambda v: project_isotonic_box(base + np.asarray(v), lo, hi) - base,
            line_interval=lambda p, d: isotonic_box_interval(base, p, d, lo, hi),
            linear_constraints=lambda p, U: isotonic_box_constraints(base, p, U, lo, hi),
            name="isotonic_box",
        )


# ============ PROJECTIONS ============


def _affine_projection(
    x: np.ndarray, x0: np.ndarray, U: np.ndarray, space: HilbertSpace
) -> np.ndarray:
    """Projection of the rows of x onto x0 + span(U), U weighted-orthonormal."""
    if U.shape[0] == 0:
        return np.broadcast_to(x0, np.shape(x)).copy()
    coeffs = space.weight * ((np.asarray(x) - x0) @ U.T)
    return x0 + coeffs @ U


def dykstra_projection(
    x: np.ndarray,
    x0: np.ndarray,
    U: np.ndarray,
    X: ConvexSetOracle,
    space: HilbertSpace,
    tol: float = 1e-10,
    max_iter: int = 10_000,
) -> np.ndarray:
    """Metric projection onto (x0 + span U) ∩ X by Dykstra's alternating projections."""
    point = np.array(x, dtype=float)
    p = np.zeros_like(point)
    q = np.zeros_like(point)
    scale = 1.0 + space.norm(point)
    gap = np.inf
    for _ in range(max_iter):
        y = _affine_projection(point + p, x0, U, space)
        p = point + p - y
        new = X.project(y + q)
        q = y + q - new
        gap = max(space.norm(new - point), space.norm(new - y))
        point = new
        if gap < tol * scale:
            return point
    raise ConvergenceError(
        f"Dykstra projection did not converge in {max_iter} iterations (last gap {gap:.3g})",
        last_gap=float(gap),
    )


def _normalized_rows(A: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Scale constraint rows to unit length and drop the empty ones."""
    norms = np.linalg.norm(A, axis=1)
    keep = norms > 0
    return A[keep] / norms[keep, None], b[keep] / norms[keep]


def _active_set_polish(c: np.ndarray, target: np.ndarray, A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve the KKT system on the rows active at c; keep c if that fails."""
    active = A @ c - b <= 1e-9 * (1.0 + np.abs(b))
    if not np.any(active):
        return c
    AS, bS = A[active], b[active]
    multipliers = np.linalg.lstsq(AS @ AS.T, bS - AS @ target, rcond=None)[0]
    if np.any(multipliers < -1e-10):
        return c
    polished = target + AS.T @ multipliers
    if np.all(A @ polished >= b - 1e-12 * (1.0 + np.abs(b))):
        return polished
    return c


def _pull_inside(c: np.ndarray, A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Shrink c toward 0, the coefficient of x0, until every row holds."""
    values = A @ c
    # x0 passed the membership test, so rounding may leave b slightly positive
    floor = np.minimum(b, 0.0)
    short = values < floor
    if not np.any(short):
        return c
    return float(np.min(floor[short] / values[short])) * c


def coefficient_projection(
    target: np.ndarray, A: np.ndarray, b: np.ndarray, opts: SolverOptions
) -> Tuple[np.ndarray, bool]:
    """Nearest c to target with A c >= b, given that c = 0 is feasible.

    SLSQP from the origin, then an active-set polish. The returned point
    always satisfies the rows; the flag is False when SLSQP stopped early.
    The minimizer lies within 2|target| of the origin, so unit rows with
    b < -2|target| cannot bind and are left out of the QP.
    """
    target = np.asarray(target, dtype=float)
    A_all, b_all = _normalized_rows(np.atleast_2d(A), np.asarray(b, dtype=float))
    if A_all.shape[0] == 0 or np.all(A_all @ target >= b_all):
        return target, True
    near = b_all > -2.0 * float(np.linalg.norm(target)) - 1e-12
    A, b = A_all[near], b_all[near]
    result = minimize(
        fun=lambda c: 0.5 * float(np.sum((c - target) ** 2)),
        x0=np.zeros_like(target),
        jac=lambda c: c - target,
        method="SLSQP",
        constraints={"type": "ineq", "fun": lambda c: A @ c - b, "jac": lambda c: A},
        options={"ftol": opts.qp_ftol, "maxiter": opts.qp_max_iter},
    )
    c = _active_set_polish(np.asarray(result.x, dtype=float), target, A, b)
    return _pull_inside(c, A_all, b_all), bool(result.success)


def _project_rows(
    data: np.ndarray,
    x0: np.ndarray,
    U: np.ndarray,
    X: ConvexSetOracle,
    space: HilbertSpace,
    opts: SolverOptions,
    inexact: Optional[List[int]] = None,
) -> np.ndarray:
    """Project every row of data onto C_U = (x0 + span U) ∩ X.

    Rows whose coefficient QP stopped before convergence are appended to
    ``inexact``; their projections are feasible but may be slightly off.
    """
    k = U.shape[0]
    if k == 0:
        return np.broadcast_to(x0, data.shape).copy()
    if k == 1 and X.line_interval is not None:
        u = U[0]
        t_lo, t_hi = X.line_interval(x0, u)
        t = np.clip(space.weight * ((data - x0) @ u), t_lo, t_hi)
        return x0 + np.outer(t, u)
    unconstrained = _affine_projection(data, x0, U, space)
    out = np.empty_like(unconstrained)
    rows = X.linear_constraints(x0, U) if X.linear_constraints is not None else None
    for i, (x, y) in enumerate(zip(data, unconstrained)):
        if X.membership(y):
            out[i] = y
        elif rows is not None:
            c, converged = coefficient_projection(space.weight * ((x - x0) @ U.T), *rows, opts)
            if not converged and inexact is not None:
                inexact.append(i)
            out[i] = x0 + c @ U
        else:
            out[i] = dykstra_projection(
                x, x0, U, X, space, tol=opts.dykstra_tol, max_iter=opts.dykstra_max_iter
            )
    return out


def project_onto_span_cap_X(
    x: Union[np.ndarray, HilbertPoint],
    x0: Union[np.ndarray, HilbertPoint],
    U: PointsLike,
    X: ConvexSetOracle,
    space: Optional[HilbertSpace] = None,
    opts: Optional[SolverOptions] = None,
) -> np.ndarray:
    """Metric projection of x onto C_U = (x0 + span U) ∩ X."""
    xv = _as_vector(x)
    x0v = _as_vector(x0)
    if space is None:
        weight = x.weight if isinstance(x, HilbertPoint) else None
        space = HilbertSpace(xv.size, weight)
    directions = _as_directions(U, space.dim)
    return _project_rows(xv[None, :], x0v, directions, X, space, opts or SolverOptions())[0]


def cost_K(
    data: PointsLike,
    set_points: Union[ConvexSetOracle, Callable[[np.ndarray], np.ndarray]],
    space: Optional[HilbertSpace] = None,
) -> float:
    """Mean squared distance of the data to a closed set given by its projection."""
    D, space = as_matrix(data, space)
    project = set_points.project if isinstance(set_points, ConvexSetOracle) else set_points
    projected = np.vstack([project(x) for x in D])
    return float(np.mean(space.sq_dist_rows(D, projected)))


def objective_H(
    data: PointsLike,
    x0: Union[np.ndarray, HilbertPoint],
    U: PointsLike,
    X: ConvexSetOracle,
    space: Optional[HilbertSpace] = None,
    opts: Optional[SolverOptions] = None,
) -> float:
    """H_X(U): mean squared distance of the data to (x0 + span U) ∩ X."""
    D, space = as_matrix(data, space)
    x0v = _as_vector(x0)
    directions = _as_directions(U, space.dim)
    projected = _project_rows(D, x0v, directions, X, space, opts or SolverOptions())
    return float(np.mean(space.sq_dist_rows(D, projected)))


# ============ RESULTS ============


@dataclass(frozen=True, eq=False)
class PrincipalComponents:
    """Ordered principal directions with scores and costs."""

    reference: np.ndarray
    directions: np.ndarray
    scores: np.ndarray
    residual_cost: float
    explained_ratios: np.ndarray
    constrained: bool
    weight: float
    total_variance: float
    eigenvalues: np.ndarray = field(default_factory=lambda: np.zeros(0))
    status: str = "ok"
    messages: Tuple[str, ...] = ()
    trace: Tuple[float, ...] = ()
    residual_path: Tuple[float, ...] = ()
    strategy: str = "pca"
    # data whose PCA subspace projection left X; empty when PCA was exact
    pca_violators: Tuple[int, ...] = ()

    @property
    def k(self) -> int:
        return int(self.directions.shape[0])

    @property
    def space(self) -> HilbertSpace:
        return HilbertSpace(int(self.directions.shape[1]), self.weight)

    def reference_point(self) -> HilbertPoint:
        return HilbertPoint(self.reference, self.weight)

    def direction_points(self) -> List[HilbertPoint]:
        return [HilbertPoint(u, self.weight) for u in self.directions]


class SufficiencyCheck(NamedTuple):
    """Outcome of the PCA sufficiency test: all subspace projections inside X?"""

    ok: bool
    violators: List[int]


def _fix_signs(U: np.ndarray, scores: Optional[np.ndarray] = None) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Make the first largest-magnitude coordinate of every direction positive."""
    U = np.array(U, dtype=float)
    scores = None if scores is None else np.array(scores, dtype=float)
    for j, u in enumerate(U):
        if u[int(np.argmax(np.abs(u)))] < 0:
            U[j] = -u
            if scores is not None:
                scores[:, j] = -scores[:, j]
    return U, scores


def _decompose(Z: np.ndarray, space: HilbertSpace) -> Tuple[np.ndarray, np.ndarray, int]:
    """Eigen-decomposition of the empirical covariance of the rows of Z.

    Returns eigenvalues (descending), weighted-orthonormal eigenvectors as rows,
    and the numerical rank.
    """
    n = Z.shape[0]
    _, s, vt = svd(Z * np.sqrt(space.weight / n), full_matrices=False)
    eigenvalues = s ** 2
    if eigenvalues.size == 0 or eigenvalues[0] <= 0:
        return eigenvalues, vt / np.sqrt(space.weight), 0
    rank = int(np.sum(eigenvalues > RANK_RTOL * eigenvalues[0]))
    return eigenvalues, vt / np.sqrt(space.weight), rank


def standard_pca(
    data: PointsLike,
    x0: Union[np.ndarray, HilbertPoint],
    k: int,
    space: Optional[HilbertSpace] = None,
) -> PrincipalComponents:
    """Top-k eigenvectors of the covariance K y = mean <x_i - x0, y> (x_i - x0)."""
    if k < 1:
        raise DegenerateDataError("Number of components must be at least 1")
    D, space = as_matrix(data, space)
    x0v = _as_vector(x0)
    Z = D - x0v
    total = float(np.mean(space.sq_dist_rows(D, x0v)))
    eigenvalues, vectors, rank = _decompose(Z, space)
    if rank == 0 or total <= 0:
        raise DegenerateDataError("Data coincide with the reference point: zero covariance")

    status, messages = "ok", ()
    k_eff = min(k, rank)
    if k_eff < k:
        status = "rank_deficient"
        messages = (f"requested {k} components but data rank is {rank}",)
        logger.warning("PCA: requested %d components, data rank is %d", k, rank)

    U = vectors[:k_eff]
    scores = space.weight * (Z @ U.T)
    U, scores = _fix_signs(U, scores)
    lam = eigenvalues[:k_eff]
    return PrincipalComponents(
        reference=x0v.copy(),
        directions=U,
        scores=scores,
        residual_cost=max(total - float(lam.sum()), 0.0),
        explained_ratios=lam / total,
        constrained=False,
        weight=space.weight,
        total_variance=total,
        eigenvalues=eigenvalues[:rank].copy(),
        status=status,
        messages=messages,
        residual_path=tuple(np.maximum(total - np.cumsum(lam), 0.0)),
        strategy="pca",
    )


def check_pca_sufficiency(
    data: PointsLike,
    x0: Union[np.ndarray, HilbertPoint],
    U: PointsLike,
    X: ConvexSetOracle,
    space: Optional[HilbertSpace] = None,
) -> SufficiencyCheck:
    """Whether every datum's projection onto x0 + span U already lies in X."""
    D, space = as_matrix(data, space)
    x0v = _as_vector(x0)
    directions = _as_directions(U, space.dim)
    projected = _affine_projection(D, x0v, directions, space)
    violators = [i for i, y in enumerate(projected) if not X.membership(y)]
    return SufficiencyCheck(not violators, violators)


# ============ CONSTRAINED SEARCH ============


def _orthonormal_columns(theta: np.ndarray) -> np.ndarray:
    """Retraction onto orthonormal columns (sign-stable QR)."""
    theta = np.atleast_2d(theta)
    if theta.shape[1] == 1:
        return theta / np.linalg.norm(theta)
    Q, R = np.linalg.qr(theta)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs


class _SphereObjective:
    """H_X restricted to directions B^T theta, remembering the running best."""

    def __init__(
        self,
        data: np.ndarray,
        x0: np.ndarray,
        basis: np.ndarray,
        fixed: np.ndarray,
        X: ConvexSetOracle,
        space: HilbertSpace,
        opts: SolverOptions,
    ):
        self.data = data
        self.x0 = x0
        self.basis = basis
        self.fixed = fixed
        self.X = X
        self.space = space
        self.opts = opts
        self.trace: List[float] = []
        self.best_cost = np.inf
        self.best_directions: Optional[np.ndarray] = None
        self.inexact = 0

    def directions(self, theta: np.ndarray) -> np.ndarray:
        Q = _orthonormal_columns(np.reshape(theta, (self.basis.shape[0], -1)))
        U, _ = _fix_signs(Q.T @ self.basis)
        return np.vstack([self.fixed, U]) if self.fixed.size else U

    def __call__(self, theta: np.ndarray) -> float:
        U = self.directions(theta)
        stopped: List[int] = []
        projected = _project_rows(self.data, self.x0, U, self.X, self.space, self.opts, stopped)
        self.inexact += len(stopped)
        cost = float(np.mean(self.space.sq_dist_rows(self.data, projected)))
        self.trace.append(cost)
        self._offer(cost, U)
        return cost

    def _offer(self, cost: float, U: np.ndarray) -> None:
        tie = COST_TIE_RTOL * (1.0 + abs(self.best_cost)) if np.isfinite(self.best_cost) else 0.0
        if cost < self.best_cost - tie:
            self.best_cost, self.best_directions = cost, U
        elif abs(cost - self.best_cost) <= tie and self.best_directions is not None:
            if tuple(U.ravel()) < tuple(self.best_directions.ravel()):
                self.best_cost, self.best_directions = cost, U


def _fd_gradient(f: Callable[[np.ndarray], float], theta: np.ndarray, h: float) -> np.ndarray:
    grad = np.zeros_like(theta)
    for idx in np.ndindex(theta.shape):
        step = np.zeros_like(theta)
        step[idx] = h
        grad[idx] = (f(theta + step) - f(theta - step)) / (2.0 * h)
    return grad


def _projected_gradient(objective: _SphereObjective, theta: np.ndarray, opts: SolverOptions) -> Tuple[np.ndarray, float]:
    """Riemannian gradient descent on orthonormal frames with Armijo backtracking."""
    theta = _orthonormal_columns(theta)
    f = objective(theta)
    step = 1.0
    for _ in range(opts.max_iter):
        g = _fd_gradient(objective, theta, opts.fd_step)
        sym = 0.5 * (theta.T @ g + g.T @ theta)
        rgrad = g - theta @ sym
        gnorm2 = float(np.sum(rgrad ** 2))
        if np.sqrt(gnorm2) < opts.grad_tol:
            break
        t = step
        while True:
            candidate = _orthonormal_columns(theta - t * rgrad)
            fc = objective(candidate)
            if fc <= f - ARMIJO * t * gnorm2:
                break
            t *= 0.5
            if t < 1e-14:
                return theta, f
        theta, f = candidate, fc
        step = min(2.0 * t, 10.0)
    return theta, f


def _hemisphere_points(count: int) -> np.ndarray:
    """Fibonacci lattice on the upper unit hemisphere of R^3."""
    i = np.arange(count) + 0.5
    z = 1.0 - i / count
    r = np.sqrt(1.0 - z ** 2)
    phi = np.pi * (1.0 + np.sqrt(5.0)) * i
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def _grid_search(objective: _SphereObjective, r: int, opts: SolverOptions) -> None:
    """Exhaustive angular grid over one-dimensional directions in R^r, r <= 3."""
    n = opts.angular_grid_size
    if r == 1:
        objective(np.ones((1, 1)))
        return
    if r == 2:
        angles = np.pi * np.arange(n) / n
        costs = [objective(np.array([[np.cos(a)], [np.sin(a)]])) for a in angles]
        best = angles[int(np.argmin(costs))]
        half = np.pi / n
        minimize_scalar(
            lambda a: objective(np.array([[np.cos(a)], [np.sin(a)]])),
            bounds=(best - half, best + half),
            method="bounded",
            options={"xatol": 1e-12},
        )
        return
    points = _hemisphere_points(n)
    costs = [objective(p[:, None]) for p in points]
    _projected_gradient(objective, points[int(np.argmin(costs))][:, None], opts)


def _multistart(objective: _SphereObjective, r: int, k: int, opts: SolverOptions) -> None:
    """Projected gradient from the PCA frame plus random orthonormal frames."""
    rng = np.random.default_rng(opts.seed)
    starts = [np.eye(r)[:, :k]]
    starts += [rng.standard_normal((r, k)) for _ in range(opts.n_random_starts)]
    for theta in starts:
        _projected_gradient(objective, theta, opts)


def _search(
    objective: _SphereObjective, r: int, k: int, opts: SolverOptions
) -> str:
    if r == k:
        objective(np.eye(r))
        return "full_span"
    strategy = opts.strategy
    if strategy == "auto":
        strategy = "grid" if (k == 1 and r <= 3) else "multistart"
    if strategy == "grid" and not (k == 1 and r <= 3):
        logger.warning("CPCA: angular grid needs k=1 and span dimension <= 3; using multistart")
        strategy = "multistart"
    if strategy == "grid":
        _grid_search(objective, r, opts)
    else:
        _multistart(objective, r, k, opts)
    return strategy


def _span_basis(D: np.ndarray, x0: np.ndarray, space: HilbertSpace) -> np.ndarray:
    _, vectors, rank = _decompose(D - x0, space)
    if rank == 0:
        raise DegenerateDataError("Data coincide with the reference point: zero covariance")
    return vectors[:rank]


def _constrained_result(
    D: np.ndarray,
    x0: np.ndarray,
    U: np.ndarray,
    X: ConvexSetOracle,
    space: HilbertSpace,
    opts: SolverOptions,
    total: float,
    eigenvalues: np.ndarray,
    trace: Sequence[float],
    reference_cost: float,
    strategy: str,
    base_messages: Tuple[str, ...],
    base_status: str,
    nested_path: Optional[Sequence[float]] = None,
    inexact: int = 0,
    pca_violators: Sequence[int] = (),
) -> PrincipalComponents:
    stopped: List[int] = []
    projected = _project_rows(D, x0, U, X, space, opts, stopped)
    inexact += len(stopped)
    residual = float(np.mean(space.sq_dist_rows(D, projected)))
    scores = space.weight * ((projected - x0) @ U.T)
    if nested_path is None:
        ratios = np.mean(scores ** 2, axis=0) / total
        order = np.argsort(-ratios, kind="stable")
        U, scores, ratios = U[order], scores[:, order], ratios[order]
        path: Tuple[float, ...] = (residual,)
    else:
        previous = np.concatenate(([total], np.asarray(nested_path)[:-1]))
        ratios = (previous - np.asarray(nested_path)) / total
        if np.any(np.diff(ratios) > 1e-12):
            logger.warning("NPCC: explained ratios are not monotone along the nesting")
        path = tuple(float(c) for c in nested_path)

    status, messages = base_status, base_messages + (
        "search restricted to the span of the centered data",
    )
    if residual >= reference_cost - COST_TIE_RTOL * (1.0 + abs(reference_cost)):
        if base_status == "ok":
            status = "no_improvement"
        messages += ("constrained search did not improve on the PCA candidate",)
    if inexact:
        logger.warning("CPCA: %d subspace projections hit the SLSQP iteration cap", inexact)
        messages += (
            f"{inexact} subspace projections hit the SLSQP iteration cap; "
            "their last feasible iterate was used",
        )
    return PrincipalComponents(
        reference=x0.copy(),
        directions=U,
        scores=scores,
        residual_cost=residual,
        explained_ratios=ratios,
        constrained=True,
        weight=space.weight,
        total_variance=total,
        eigenvalues=eigenvalues,
        status=status,
        messages=messages,
        trace=tuple(trace),
        residual_path=path,
        strategy=strategy,
        pca_violators=tuple(int(i) for i in pca_violators),
    )


def _check_reference(x0: np.ndarray, X: ConvexSetOracle) -> None:
    if not X.membership(x0):
        raise InfeasibleError("Reference point x0 must lie in the constraint set X")


def solve_gpcc(
    data: PointsLike,
    x0: Union[np.ndarray, HilbertPoint],
    k: int,
    X: ConvexSetOracle,
    opts: Optional[SolverOptions] = None,
    space: Optional[HilbertSpace] = None,
) -> PrincipalComponents:
    """Global principal convex components: orthonormal U minimizing H_X(U)."""
    opts = opts or SolverOptions()
    D, space = as_matrix(data, space)
    x0v = _as_vector(x0)
    _check_reference(x0v, X)

    pca = standard_pca(D, x0v, k, space)
    check = check_pca_sufficiency(D, x0v, pca.directions, X, space)
    if check.ok:
        logger.debug("GPCC: PCA projections lie in X; PCA solution is exact")
        return replace(pca, trace=(pca.residual_cost,))

    logger.info(
        "GPCC: %d subspace projections leave X (first: %d); running constrained search",
        len(check.violators),
        check.violators[0],
    )
    basis = _span_basis(D, x0v, space)
    r, k_eff = basis.shape[0], pca.k
    objective = _SphereObjective(D, x0v, basis, np.zeros((0, space.dim)), X, space, opts)
    reference_cost = objective(np.eye(r)[:, :k_eff])
    strategy = _search(objective, r, k_eff, opts)
    return _constrained_result(
        D, x0v, objective.best_directions, X, space, opts,
        total=pca.total_variance,
        eigenvalues=pca.eigenvalues,
        trace=objective.trace,
        reference_cost=reference_cost,
        strategy=strategy,
        base_messages=pca.messages,
        base_status=pca.status,
        inexact=objective.inexact,
        pca_violators=check.violators,
    )


def _complement_basis(basis: np.ndarray, chosen: np.ndarray, space: HilbertSpace) -> np.ndarray:
    """Weighted-orthonormal basis of span(basis) orthogonal to the chosen rows."""
    residual = basis - (space.weight * (basis @ chosen.T)) @ chosen
    _, s, vt = svd(residual * np.sqrt(space.weight), full_matrices=False)
    keep = s > 1e-8 * max(s[0], 1.0) if s.size else np.zeros(0, dtype=bool)
    return vt[keep] / np.sqrt(space.weight)


def solve_npcc(
    data: PointsLike,
    x0: Union[np.ndarray, HilbertPoint],
    k: int,
    X: ConvexSetOracle,
    opts: Optional[SolverOptions] = None,
    space: Optional[HilbertSpace] = None,
) -> PrincipalComponents:
    """Nested principal convex components, built one direction at a time."""
    opts = opts or SolverOptions()
    D, space = as_matrix(data, space)
    x0v = _as_vector(x0)
    _check_reference(x0v, X)

    if k == 1:
        return solve_gpcc(D, x0v, 1, X, opts, space)

    pca = standard_pca(D, x0v, k, space)
    check = check_pca_sufficiency(D, x0v, pca.directions, X, space)
    if check.ok:
        logger.debug("NPCC: PCA projections lie in X; PCA solution is exact")
        return replace(pca, trace=(pca.residual_cost,))

    basis = _span_basis(D, x0v, space)
    chosen = np.zeros((0, space.dim))
    path: List[float] = []
    trace: List[float] = []
    strategies = []
    inexact = 0
    reference_cost = objective_H(D, x0v, pca.directions, X, space, opts)
    for _ in range(pca.k):
        sub = basis if chosen.shape[0] == 0 else _complement_basis(basis, chosen, space)
        objective = _SphereObjective(D, x0v, sub, chosen, X, space, opts)
        objective(np.eye(sub.shape[0])[:, :1])
        strategies.append(_search(objective, sub.shape[0], 1, opts))
        chosen = objective.best_directions
        path.append(objective.best_cost)
        trace.extend(objective.trace)
        inexact += objective.inexact
        logger.debug("NPCC: component %d residual %.6g", chosen.shape[0], objective.best_cost)

    return _constrained_result(
        D, x0v, chosen, X, space, opts,
        total=pca.total_variance,
        eigenvalues=pca.eigenvalues,
        trace=trace,
        reference_cost=reference_cost,
        strategy="+".join(dict.fromkeys(strategies)),
        base_messages=pca.messages,
        base_status=pca.status,
        nested_path=path,
        inexact=inexact,
        pca_violators=check.violators,
    )
