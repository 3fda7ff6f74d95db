"""Tests for quantile-grid construction and the Wasserstein distance."""

import numpy as np
import pytest
from scipy.stats import norm

from geopca.errors import GridMismatchError, InvalidMeasureError, OutsideDomainError
from geopca.measures import (
    EmpiricalSample,
    GridConfig,
    Histogram,
    QuantileGrid,
    density_curve,
    gaussian_quantile,
    implied_cdf,
    quantile_from_histogram,
    quantile_from_location_scale,
    quantile_from_samples,
    wasserstein_distance,
)


def test_knots_are_midpoints():
    grid = GridConfig(4)
    np.testing.assert_allclose(grid.knots, [0.125, 0.375, 0.625, 0.875])
    assert grid.weight == 0.25


@pytest.mark.parametrize("m", [0, 1, 2.5])
def test_grid_size_must_be_integer_at_least_two(m):
    with pytest.raises(InvalidMeasureError):
        GridConfig(m)


def test_empty_domain_rejected():
    with pytest.raises(InvalidMeasureError):
        GridConfig(10, 1.0, 1.0)


def test_grid_equality_ignores_knot_array():
    assert GridConfig(10, 0.0, 1.0) == GridConfig(10, 0.0, 1.0)
    assert GridConfig(10) != GridConfig(11)


def test_tiny_decrease_is_repaired():
    grid = GridConfig(3)
    qg = QuantileGrid(grid, [0.0, 1.0, 1.0 - 1e-14])
    assert np.all(np.diff(qg.q) >= 0)


def test_large_decrease_rejected():
    with pytest.raises(InvalidMeasureError):
        QuantileGrid(GridConfig(3), [0.0, 1.0, 0.5])


def test_non_finite_quantile_rejected():
    with pytest.raises(InvalidMeasureError):
        QuantileGrid(GridConfig(2), [0.0, np.nan])


def test_wrong_length_rejected():
    with pytest.raises(GridMismatchError):
        QuantileGrid(GridConfig(3), [0.0, 1.0])


def test_quantile_outside_domain_rejected():
    with pytest.raises(OutsideDomainError):
        QuantileGrid(GridConfig(2, 0.0, 1.0), [0.5, 1.5])


def test_quantile_grid_is_read_only():
    qg = QuantileGrid(GridConfig(2), [0.0, 1.0])
    with pytest.raises(ValueError):
        qg.q[0] = 5.0


def test_samples_use_left_continuous_inverse():
    grid = GridConfig(4)
    qg = quantile_from_samples(EmpiricalSample(np.array([3.0, 1.0, 2.0, 4.0])), grid)
    # t_j = 1/8, 3/8, 5/8, 7/8 against the cdf steps at 1/4, 1/2, 3/4, 1
    np.testing.assert_array_equal(qg.q, [1.0, 2.0, 3.0, 4.0])


def test_single_sample_is_point_mass():
    qg = quantile_from_samples(EmpiricalSample(np.array([2.5])), GridConfig(5))
    np.testing.assert_array_equal(qg.q, np.full(5, 2.5))


def test_empty_sample_rejected():
    with pytest.raises(InvalidMeasureError):
        EmpiricalSample(np.array([]))


def test_sample_with_nan_rejected():
    with pytest.raises(InvalidMeasureError):
        EmpiricalSample(np.array([1.0, np.nan]))


def test_samples_outside_domain_rejected():
    with pytest.raises(OutsideDomainError):
        quantile_from_samples(EmpiricalSample(np.array([-1.0, 0.5])), GridConfig(4, 0.0, 1.0))


def test_normal_draws_match_normal_quantiles():
    rng = np.random.default_rng(3)
    grid = GridConfig(200)
    qg = quantile_from_samples(EmpiricalSample(rng.standard_normal(10_000)), grid)
    inner = slice(10, 190)
    np.testing.assert_allclose(qg.q[inner], norm.ppf(grid.knots[inner]), atol=0.08)


def test_uniform_histogram_gives_identity_quantile():
    grid = GridConfig(10)
    qg = quantile_from_histogram(Histogram(np.array([0.0, 1.0]), np.array([1.0])), grid)
    np.testing.assert_allclose(qg.q, grid.knots, atol=1e-15)


def test_histogram_skips_zero_mass_bins():
    grid = GridConfig(4)
    hist = Histogram(np.array([0.0, 1.0, 2.0, 3.0]), np.array([0.5, 0.0, 0.5]))
    qg = quantile_from_histogram(hist, grid)
    np.testing.assert_allclose(qg.q, [0.25, 0.75, 2.25, 2.75])


def test_histogram_validation():
    with pytest.raises(InvalidMeasureError):
        Histogram(np.array([0.0, 1.0]), np.array([0.5]))
    with pytest.raises(InvalidMeasureError):
        Histogram(np.array([0.0, 0.0, 1.0]), np.array([0.5, 0.5]))
    with pytest.raises(InvalidMeasureError):
        Histogram(np.array([0.0, 1.0, 2.0]), np.array([1.5, -0.5]))
    with pytest.raises(InvalidMeasureError):
        Histogram(np.array([0.0, 1.0, 2.0]), np.array([1.0]))


def test_histogram_normalized():
    hist = Histogram.normalized([0.0, 1.0, 2.0], [2.0, 2.0])
    np.testing.assert_allclose(hist.masses, [0.5, 0.5])


def test_location_scale_of_normal():
    grid = GridConfig(500)
    qg = quantile_from_location_scale(gaussian_quantile(grid), 0.4, -1.8)
    np.testing.assert_allclose(qg.q, -1.8 + 0.4 * norm.ppf(grid.knots), atol=1e-14)


def test_location_scale_example_from_geodesic_figure():
    grid = GridConfig(500)
    qg = quantile_from_location_scale(gaussian_quantile(grid), 0.5, 2.0)
    np.testing.assert_allclose(qg.q, gaussian_quantile(grid, 2.0, 0.5).q, atol=1e-14)


def test_location_scale_requires_positive_scale():
    base = gaussian_quantile(GridConfig(10))
    with pytest.raises(InvalidMeasureError):
        quantile_from_location_scale(base, 0.0, 1.0)


def test_location_scale_leaving_domain():
    base = QuantileGrid(GridConfig(4, -1.0, 1.0), [-0.5, -0.2, 0.2, 0.5])
    with pytest.raises(OutsideDomainError):
        quantile_from_location_scale(base, 3.0, 0.0)


def test_distance_to_itself_is_zero(grid):
    qg = gaussian_quantile(grid, 1.0, 2.0)
    assert wasserstein_distance(qg, qg) == 0.0


def test_distance_between_translates():
    grid = GridConfig(100)
    x = gaussian_quantile(grid)
    assert wasserstein_distance(x, gaussian_quantile(grid, 3.0, 1.0)) == pytest.approx(3.0, abs=1e-12)


def test_distance_between_dirac_masses():
    grid = GridConfig(7)
    x = QuantileGrid(grid, np.zeros(7))
    y = QuantileGrid(grid, np.full(7, 2.0))
    assert wasserstein_distance(x, y) == pytest.approx(2.0)


def test_distance_grid_mismatch():
    with pytest.raises(GridMismatchError):
        wasserstein_distance(gaussian_quantile(GridConfig(10)), gaussian_quantile(GridConfig(11)))


def _random_grids(rng, grid, count):
    return [QuantileGrid(grid, np.sort(rng.normal(0.0, rng.uniform(0.5, 3.0), grid.m))) for _ in range(count)]


def test_distance_is_symmetric_and_satisfies_triangle_inequality():
    rng = np.random.default_rng(21)
    grid = GridConfig(50)
    for _ in range(200):
        x, y, z = _random_grids(rng, grid, 3)
        assert wasserstein_distance(x, y) == wasserstein_distance(y, x)
        assert wasserstein_distance(x, z) <= wasserstein_distance(x, y) + wasserstein_distance(y, z) + 1e-12


def test_location_scale_maps_compose():
    rng = np.random.default_rng(22)
    base = gaussian_quantile(GridConfig(200))
    for _ in range(50):
        a1, a2 = rng.uniform(0.2, 3.0, 2)
        b1, b2 = rng.uniform(-5.0, 5.0, 2)
        twice = quantile_from_location_scale(quantile_from_location_scale(base, a1, b1), a2, b2)
        once = quantile_from_location_scale(base, a1 * a2, a2 * b1 + b2)
        np.testing.assert_allclose(twice.q, once.q, rtol=0.0, atol=1e-12)


def test_distance_between_location_scale_siblings():
    """W2^2 of two images of one base: (da)^2 E[X^2] + 2 da db E[X] + db^2."""
    rng = np.random.default_rng(23)
    grid = GridConfig(300)
    for _ in range(50):
        base = _random_grids(rng, grid, 1)[0]
        first, second = base.q.mean(), np.mean(base.q ** 2)
        a1, a2 = rng.uniform(0.2, 3.0, 2)
        b1, b2 = rng.uniform(-5.0, 5.0, 2)
        da, db = a1 - a2, b1 - b2
        d = wasserstein_distance(
            quantile_from_location_scale(base, a1, b1), quantile_from_location_scale(base, a2, b2)
        )
        expected = np.sqrt(max(da * da * second + 2.0 * da * db * first + db * db, 0.0))
        assert d == pytest.approx(expected, rel=1e-9, abs=1e-12)


def test_sample_quantiles_ignore_order():
    rng = np.random.default_rng(24)
    grid = GridConfig(64)
    for size in (1, 2, 7, 64, 500):
        values = rng.normal(3.0, 2.0, size)
        expected = quantile_from_samples(EmpiricalSample(values), grid).q
        for _ in range(5):
            shuffled = quantile_from_samples(EmpiricalSample(rng.permutation(values)), grid).q
            np.testing.assert_array_equal(shuffled, expected)


def test_implied_cdf_of_histogram_within_half_cell():
    m = 200
    grid = GridConfig(m)
    edges = np.array([0.0, 1.0, 2.5, 3.0, 7.0])
    hist = Histogram.normalized(edges, [0.1, 0.45, 0.05, 0.4])
    qg = quantile_from_histogram(hist, grid)
    x = np.linspace(-1.0, 8.0, 301)
    true_cdf = np.interp(x, hist.edges, hist.cdf_at_edges())
    assert np.max(np.abs(implied_cdf(qg, x) - true_cdf)) <= 1.0 / (2 * m) + 1e-12
    rebinned = np.diff(implied_cdf(qg, edges))
    np.testing.assert_allclose(rebinned, hist.masses, atol=1.0 / m + 1e-12)


def test_density_curve_of_normal():
    grid = GridConfig(1000)
    x, f = density_curve(gaussian_quantile(grid), points=512)
    assert np.max(np.abs(f - norm.pdf(x))) < 0.01


def test_density_curve_point_mass_needs_range():
    qg = QuantileGrid(GridConfig(5), np.ones(5))
    with pytest.raises(InvalidMeasureError):
        density_curve(qg)


def test_moments_of_normal():
    qg = gaussian_quantile(GridConfig(2000), 1.5, 1.0)
    assert qg.mean() == pytest.approx(1.5, abs=1e-12)
    assert qg.second_moment() == pytest.approx(1.0 + 1.5 ** 2, abs=1e-2)
