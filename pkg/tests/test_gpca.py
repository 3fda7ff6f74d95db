"""Tests for geodesic PCA, functional PCA and the consistency simulation."""

import numpy as np
import pytest

from geopca.config import SolverOptions
from geopca.cpca import HilbertSpace, objective_H
from geopca.errors import DegenerateDataError, GridMismatchError
from geopca.geometry import ReferenceFrame, log_map
from geopca.gpca import (
    consistency_experiment,
    fpca_fit,
    gpca_cost,
    gpca_fit,
    gpca_scores,
    location_scale_population,
    location_scale_sampler,
    mode_of_variation,
)
from geopca.measures import (
    GridConfig,
    EmpiricalSample,
    QuantileGrid,
    gaussian_quantile,
    quantile_from_location_scale,
    quantile_from_samples,
    wasserstein_distance,
)

from conftest import FOUR_KNOT_SLOPE, affine_coordinates


def affine_parts(v, base_q):
    """(alpha, beta) with v = alpha * base_q + beta on the grid."""
    beta = np.mean(v)
    alpha = np.mean((v - beta) * base_q) / np.mean(base_q * (base_q - np.mean(base_q)))
    return alpha, beta


def test_first_direction_of_concentrated_set(grid, concentrated):
    gc = gpca_fit(concentrated, 1)
    base = gaussian_quantile(grid).q
    alpha, beta = affine_coordinates(gc.directions[0], base)
    assert alpha == pytest.approx(0.36, abs=0.01)
    assert beta == pytest.approx(0.93, abs=0.01)
    assert not gc.pcs.constrained
    assert np.max(np.abs(gc.x0)) < 1e-10


def test_concentrated_modes_are_gaussian(grid, concentrated):
    gc = gpca_fit(concentrated, 1)
    base = gaussian_quantile(grid).q
    alpha, beta = affine_parts(gc.directions[0], base)
    for t in (-2.0, -1.0, -0.5, 0.5, 1.0, 2.0):
        mode = mode_of_variation(gc, 0, t)
        expected = quantile_from_location_scale(gaussian_quantile(grid), 1.0 + t * alpha, t * beta)
        np.testing.assert_allclose(mode.q, expected.q, atol=1e-9)


def test_mode_range_lower_end(grid, concentrated):
    gc = gpca_fit(concentrated, 1)
    alpha, _ = affine_parts(gc.directions[0], gaussian_quantile(grid).q)
    t_lo, t_hi = gc.mode_range(0)
    assert t_lo == pytest.approx(-1.0 / alpha, rel=1e-6)
    assert t_hi == np.inf


def test_mode_at_zero_is_barycenter(concentrated):
    gc = gpca_fit(concentrated, 2)
    for j in range(gc.n_components):
        np.testing.assert_allclose(mode_of_variation(gc, j, 0.0).q, gc.barycenter.q, atol=1e-12)


def test_mode_clamped_outside_range(concentrated, caplog):
    gc = gpca_fit(concentrated, 1)
    t_lo, _ = gc.mode_range(0)
    mode = mode_of_variation(gc, 0, t_lo - 5.0)
    assert "clamped" in caplog.text
    assert np.all(np.diff(mode.q) >= 0)
    np.testing.assert_allclose(mode.q, mode_of_variation(gc, 0, t_lo).q, atol=1e-12)


def test_modes_always_valid_on_compact_domain():
    grid = GridConfig(400, -6.0, 6.0)
    base = gaussian_quantile(GridConfig(400)).q
    data = [
        QuantileGrid(grid, np.clip(a * base + b, -6.0, 6.0))
        for a, b in [(0.3, -1.0), (0.8, 0.5), (1.5, 0.2), (0.6, 1.5), (1.1, -0.7)]
    ]
    gc = gpca_fit(data, 2)
    for j in range(gc.n_components):
        for t in np.linspace(-20.0, 20.0, 41):
            mode = mode_of_variation(gc, j, t)
            assert np.all(np.diff(mode.q) >= 0)
            assert mode.q[0] >= -6.0 and mode.q[-1] <= 6.0


def test_mode_is_geodesic(concentrated):
    gc = gpca_fit(concentrated, 1)
    t1, t2, t3 = -1.0, 0.3, 1.7
    g1, g2, g3 = (mode_of_variation(gc, 0, t) for t in (t1, t2, t3))
    d12, d23, d13 = (
        wasserstein_distance(g1, g2),
        wasserstein_distance(g2, g3),
        wasserstein_distance(g1, g3),
    )
    assert abs(d12 + d23 - d13) < 1e-10


def test_scores_of_barycenter_are_zero(concentrated):
    gc = gpca_fit(concentrated, 2)
    np.testing.assert_allclose(gpca_scores(gc, [gc.barycenter]), 0.0, atol=1e-12)


def test_scores_have_zero_mean(concentrated):
    gc = gpca_fit(concentrated, 2)
    np.testing.assert_allclose(gpca_scores(gc, concentrated).mean(axis=0), 0.0, atol=1e-12)


def test_scores_reproduce_plane_projections(grid, concentrated):
    gc = gpca_fit(concentrated, 1)
    base = gaussian_quantile(grid).q
    frame = ReferenceFrame(gaussian_quantile(grid))
    scores = gpca_scores(gc, concentrated)[:, 0]
    u = np.array(affine_coordinates(gc.directions[0], base))
    for score, nu in zip(scores, concentrated):
        v = np.array(affine_coordinates(log_map(frame, nu).v, base))
        assert score == pytest.approx(float(v @ u), abs=1e-9)


def test_scores_grid_mismatch(concentrated):
    gc = gpca_fit(concentrated, 1)
    with pytest.raises(GridMismatchError):
        gpca_scores(gc, [gaussian_quantile(GridConfig(10))])


def test_identical_measures_are_degenerate(grid):
    nu = gaussian_quantile(grid)
    with pytest.raises(DegenerateDataError):
        gpca_fit([nu, nu, nu], 1)


def test_single_measure_rejected(grid):
    with pytest.raises(DegenerateDataError):
        gpca_fit([gaussian_quantile(grid)], 1)


def test_spread_set_is_constrained(spread):
    gc = gpca_fit(spread, 1)
    assert gc.pcs.constrained
    assert gc.pcs.status == "ok"
    assert gc.pcs.residual_cost < gc.pcs.trace[0]


def test_cost_in_measure_space_equals_tangent_cost(spread):
    gc = gpca_fit(spread, 1)
    assert gpca_cost(gc, spread) == pytest.approx(gc.cost, rel=1e-9, abs=1e-12)


def test_explained_ratios_sorted_and_bounded(spread):
    gc = gpca_fit(spread, 2)
    ratios = gc.pcs.explained_ratios
    assert np.all(ratios >= 0.0) and ratios.sum() <= 1.0 + 1e-12
    assert np.all(np.diff(ratios) <= 1e-12)


def test_nested_method(spread):
    gc = gpca_fit(spread, 2, method="gpca-nested")
    assert gc.method == "gpca-nested"
    assert gc.n_components == 2


def test_fit_is_frame_consistent(grid, spread):
    """Fits at the barycenter and at another reference give the same geodesics."""
    at_mean = gpca_fit(spread, 1)
    other = gaussian_quantile(grid, 0.5, 2.0)
    elsewhere = gpca_fit(spread, 1, reference=other)
    assert elsewhere.cost == pytest.approx(at_mean.cost, abs=1e-8)
    for t in np.linspace(-2.0, 2.0, 9):
        a = mode_of_variation(at_mean, 0, t)
        b = mode_of_variation(elsewhere, 0, t)
        assert wasserstein_distance(a, b) < 1e-5


def test_samples_far_from_origin_fit_after_tilt(rng, caplog):
    """Few draws per record leave the barycenter flat; the repaired frame must hold."""
    grid = GridConfig(100)
    data = [quantile_from_samples(EmpiricalSample(rng.normal(50.0, 1.0, 5)), grid) for _ in range(3)]
    gc = gpca_fit(data, 1)
    assert "flat" in caplog.text
    assert np.max(np.abs(gc.frame.mu.q - gc.barycenter.q)) < 1e-6
    assert np.all(np.diff(gc.frame.mu.q) > 0)
    for t in np.linspace(-3.0, 3.0, 7):
        assert np.all(np.diff(mode_of_variation(gc, 0, t).q) >= 0)


def test_two_components_below_rank_run_constrained(four_knot):
    opts = SolverOptions(n_random_starts=2, max_iter=50)
    gc = gpca_fit(four_knot, 2, opts)
    np.testing.assert_allclose(gc.barycenter.q, FOUR_KNOT_SLOPE, atol=1e-12)
    assert gc.pcs.constrained
    assert gc.n_components == 2
    space = HilbertSpace(4, gc.frame.grid.weight)
    gram = space.weight * gc.directions @ gc.directions.T
    np.testing.assert_allclose(gram, np.eye(2), atol=1e-8)
    assert gc.cost <= gc.pcs.trace[0] + 1e-9
    logs = np.vstack([log_map(gc.frame, nu).v for nu in four_knot])
    direct = objective_H(logs, gc.x0, gc.directions, gc.frame.convex_oracle(), space)
    assert direct == pytest.approx(gc.cost, abs=1e-12)
    assert gpca_cost(gc, four_knot) == pytest.approx(gc.cost, rel=1e-9, abs=1e-12)
    for j in range(2):
        for t in np.linspace(-2.0, 2.0, 9):
            assert np.all(np.diff(mode_of_variation(gc, j, t).q) >= 0)


def test_nested_two_components_below_rank(four_knot):
    opts = SolverOptions(n_random_starts=1, max_iter=20, angular_grid_size=400)
    gc = gpca_fit(four_knot, 2, opts, method="gpca-nested")
    assert gc.pcs.constrained
    assert gc.n_components == 2
    assert len(gc.pcs.residual_path) == 2
    assert gc.pcs.residual_path[1] <= gc.pcs.residual_path[0] + 1e-9


def test_fpca_linear_mode_goes_negative(concentrated):
    fc = fpca_fit(concentrated, 1)
    low = min(fc.linear_mode(0, -2.0).min(), fc.linear_mode(0, 2.0).min())
    assert low < 0.0


def test_fpca_mean_density_integrates_to_one(concentrated):
    fc = fpca_fit(concentrated, 2)
    dx = fc.x[1] - fc.x[0]
    assert np.sum(fc.mean_density) * dx == pytest.approx(1.0, abs=0.02)
    assert np.all(np.diff(fc.explained_ratios) <= 1e-15)


def test_fpca_density_matrix_input():
    x = np.linspace(0.0, 1.0, 11)
    densities = np.vstack([np.ones(11), 2.0 * x, 2.0 - 2.0 * x])
    fc = fpca_fit(densities, 1, x=x)
    assert fc.pcs.k == 1
    np.testing.assert_allclose(fc.mean_density, np.ones(11))


def test_fpca_dimension_mismatch():
    with pytest.raises(GridMismatchError):
        fpca_fit(np.ones((3, 5)), 1, x=np.linspace(0.0, 1.0, 4))


def test_fpca_identical_densities_degenerate(grid):
    nu = gaussian_quantile(grid)
    with pytest.raises(DegenerateDataError):
        fpca_fit([nu, nu], 1)


def test_consistency_with_deterministic_sampler():
    grid = GridConfig(100, -10.0, 10.0)
    nu = QuantileGrid(grid, 2.0 * grid.knots - 1.0)
    other = QuantileGrid(grid, 3.0 * grid.knots - 1.0)

    def sampler(rng, n):
        return [nu if i % 2 else other for i in range(n)]

    population = QuantileGrid(grid, 2.5 * grid.knots - 1.0)
    report = consistency_experiment(sampler, population, n_schedule=[4, 8], trials=2)
    np.testing.assert_allclose(report.barycenter_errors, 0.0, atol=1e-14)


def test_location_scale_population_barycenter_and_cost():
    grid = GridConfig(500, -10.0, 10.0)
    base = QuantileGrid(grid, 2.0 * grid.knots - 1.0)
    population, cost = location_scale_population(base, (0.5, 1.5), (-1.0, 1.0), k=1)
    np.testing.assert_allclose(population.q, base.q, atol=1e-15)
    # Var(a) * E[X^2] = (1/12) * (1/3)
    assert cost == pytest.approx(1.0 / 36.0, rel=0.02)


def test_consistency_is_seed_deterministic():
    grid = GridConfig(100, -10.0, 10.0)
    base = QuantileGrid(grid, 2.0 * grid.knots - 1.0)
    sampler = location_scale_sampler(base)
    a = consistency_experiment(sampler, base, n_schedule=[10, 20], trials=3, seed=4)
    b = consistency_experiment(sampler, base, n_schedule=[10, 20], trials=3, seed=4, max_workers=1)
    np.testing.assert_array_equal(a.barycenter_errors, b.barycenter_errors)
    np.testing.assert_array_equal(a.costs, b.costs)
