"""Tests pour le module mixture_cure_model : quantités du modèle, vraisemblance et dérivées"""

import numpy as np
import pytest
from scipy.special import expit

from lpsmc.errors import DomainError, NumericError
from lpsmc.mixture_cure_model import (
    BinGrid,
    LatentVector,
    SurvivalDataset,
    baseline_survival,
    design_for,
    incidence,
    latency_survival,
    loglik,
    loglik_gradient,
    loglik_hessian,
    omega_cache,
    population_survival,
    unit_loglik,
)
from lpsmc.spline_basis import KnotGrid, basis_matrix, bspline_eval
from tests.conftest import make_instance

T_UPPER = 11.0


@pytest.fixture
def grids():
    return KnotGrid(T_UPPER, 10), BinGrid(300, T_UPPER)


def _one_unit(t, tau, x, z):
    return SurvivalDataset([t], [tau], np.atleast_2d(x), np.atleast_2d(z))


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------


def test_dataset_defaults_and_dimensions():
    data = SurvivalDataset([1.0, 2.0, 3.0], [1, 0, 1], np.ones((3, 1)), np.zeros((3, 2)))
    assert (data.n, data.p, data.q) == (3, 0, 2)
    assert data.latency_labels == ("z1", "z2")
    assert data.latent_dim(10) == 13
    with pytest.raises(ValueError):
        data.times[0] = 5.0


def test_dataset_without_latency_covariates():
    data = SurvivalDataset([1.0, 2.0], [1, 0], np.ones((2, 1)), np.empty((2, 0)))
    assert data.Z.shape == (2, 0)
    assert data.q == 0


@pytest.mark.parametrize(
    "times,events,X",
    [
        ([1.0, -2.0], [1, 0], np.ones((2, 1))),
        ([1.0, 2.0], [1, 2], np.ones((2, 1))),
        ([1.0, 2.0], [0, 0], np.ones((2, 1))),
        ([1.0, 2.0], [1, 0], np.array([[1.0], [0.0]])),
        ([1.0, np.inf], [1, 0], np.ones((2, 1))),
    ],
)
def test_dataset_invalid(times, events, X):
    with pytest.raises(ValueError):
        SurvivalDataset(times, events, X, np.zeros((2, 1)))


def test_dataset_size_warning(caplog):
    data = SurvivalDataset([1.0, 2.0], [1, 0], np.ones((2, 1)), np.zeros((2, 1)))
    with caplog.at_level("WARNING", logger="lpsmc.model"):
        assert not data.check_size(10)
    assert "dimension" in caplog.text


def test_latent_vector_order():
    xi = LatentVector([1.0, 2.0], [3.0, 4.0], [5.0])
    np.testing.assert_array_equal(xi.flatten(), [1.0, 2.0, 3.0, 4.0, 5.0])
    back = LatentVector.from_flat(xi.flatten(), 2, 2, 1)
    np.testing.assert_array_equal(back.gamma, [5.0])
    with pytest.raises(ValueError):
        LatentVector.from_flat(np.zeros(4), 2, 2, 1)
    with pytest.raises(ValueError):
        LatentVector([np.nan], [0.0], [])


def test_bin_grid_geometry():
    bins = BinGrid(300, T_UPPER)
    assert bins.width == pytest.approx(11.0 / 300)
    np.testing.assert_allclose(bins.midpoints[:2], [0.5 * bins.width, 1.5 * bins.width])
    assert bins.bin_index(0.0) == 1
    assert bins.bin_index(T_UPPER) == 300
    # une frontière appartient à l'intervalle de droite
    assert bins.bin_index(bins.width) == 2
    assert bins.bin_index(149.5 * bins.width) == 150
    with pytest.raises(DomainError):
        bins.bin_index(11.01)


# ---------------------------------------------------------------------------
# Quantités du modèle
# ---------------------------------------------------------------------------


def test_incidence_values():
    assert incidence(np.zeros(3), [1.0, 0.3, -2.0]) == 0.5
    assert incidence([0.70, -1.15, 0.95], [1.0, 0.0, 0.0]) == pytest.approx(
        1.0 / (1.0 + np.exp(-0.70)), abs=1e-12
    )
    assert incidence([0.70, -1.15, 0.95], [1.0, 0.0, 0.0]) == pytest.approx(0.6682, abs=1e-4)


def test_incidence_saturates():
    value = incidence([800.0], [1.0])
    assert np.isfinite(value)
    assert value == 1.0
    assert incidence([-800.0], [1.0]) == 0.0


def test_baseline_survival_constant_hazard(grids):
    """theta = 0 : h0 = 1, S0 = exp(-m Delta)"""
    grid, bins = grids
    theta = np.zeros(grid.num_basis)
    t = 100.2 * bins.width
    assert baseline_survival(theta, grid, bins, t) == pytest.approx(np.exp(-101 * bins.width))
    assert baseline_survival(theta, grid, bins, T_UPPER) == pytest.approx(np.exp(-11.0), rel=1e-10)
    assert baseline_survival(theta, grid, bins, T_UPPER) == pytest.approx(1.6702e-5, rel=1e-4)


def test_baseline_survival_first_bin(grids):
    grid, bins = grids
    theta = np.random.default_rng(1).standard_normal(grid.num_basis)
    expected = np.exp(-np.exp(theta @ bspline_eval(grid, bins.midpoints[0])) * bins.width)
    assert baseline_survival(theta, grid, bins, 0.0) == pytest.approx(expected, rel=1e-12)
    assert 0.0 < expected < 1.0


def test_baseline_survival_nonincreasing(grids):
    grid, bins = grids
    theta = np.random.default_rng(2).standard_normal(grid.num_basis)
    values = baseline_survival(theta, grid, bins, np.linspace(0.0, T_UPPER, 200))
    assert np.all(np.diff(values) <= 0.0)


def test_baseline_survival_domain(grids):
    grid, bins = grids
    with pytest.raises(DomainError):
        baseline_survival(np.zeros(grid.num_basis), grid, bins, 12.0)


def test_latency_survival(grids):
    grid, bins = grids
    theta = np.random.default_rng(4).standard_normal(grid.num_basis)
    t = 3.7
    s0 = baseline_survival(theta, grid, bins, t)
    assert latency_survival(theta, [0.0, 0.0], [0.3, 1.0], grid, bins, t) == s0
    assert latency_survival(theta, [-0.1, 0.25], [0.0, 0.0], grid, bins, t) == s0
    m = int(bins.bin_index(t))
    value = latency_survival(np.zeros(grid.num_basis), [np.log(2.0)], [1.0], grid, bins, t)
    assert value == pytest.approx(np.exp(-2 * m * bins.width), rel=1e-12)


def test_population_survival_composition(grids):
    grid, bins = grids
    xi = LatentVector(np.zeros(grid.num_basis), [0.70, -1.15, 0.95], [-0.10, 0.25])
    t = 149.5 * bins.width
    p = 1.0 / (1.0 + np.exp(-0.70))
    expected = 1.0 - p + p * np.exp(-150 * bins.width)
    value = population_survival(xi, [1.0, 0.0, 0.0], [0.0, 0.0], grid, bins, t)
    assert value == pytest.approx(expected, rel=1e-12)
    assert np.exp(-150 * bins.width) == pytest.approx(np.exp(-5.5))


def test_population_survival_limits(grids):
    grid, bins = grids
    # S_u ~ 1 : theta très négatif ; S_u ~ 0 : theta très positif
    xi_low = LatentVector(np.full(grid.num_basis, -50.0), [0.0], [0.0])
    xi_high = LatentVector(np.full(grid.num_basis, 50.0), [0.0], [0.0])
    assert population_survival(xi_low, [1.0], [0.0], grid, bins, 5.0) == pytest.approx(1.0)
    assert population_survival(xi_high, [1.0], [0.0], grid, bins, 5.0) == pytest.approx(0.5)


# ---------------------------------------------------------------------------
# Log-vraisemblance
# ---------------------------------------------------------------------------


def test_loglik_single_event_by_hand(grids):
    grid, bins = grids
    rng = np.random.default_rng(5)
    xi = LatentVector(0.3 * rng.standard_normal(grid.num_basis), [0.4, -0.2], [0.5])
    x, z, t = np.array([1.0, 0.7]), np.array([1.3]), 4.2
    data = _one_unit(t, 1, x, z)
    j = int(bins.bin_index(t))
    log_hazard = basis_matrix(grid, bins.midpoints) @ xi.theta
    omega0 = np.sum(np.exp(log_hazard[:j])) * bins.width
    expected = (
        np.log(expit(x @ xi.beta))
        + z @ xi.gamma
        + xi.theta @ bspline_eval(grid, t)
        - np.exp(z @ xi.gamma) * omega0
    )
    assert loglik(xi, data, grid, bins) == pytest.approx(expected, rel=1e-12)


def test_loglik_censored_full_survival(grids):
    grid, bins = grids
    data = _one_unit(6.0, 0, [1.0, 2.0], [0.5])
    for beta in ([3.0, -1.0], [-4.0, 2.0]):
        xi = LatentVector(np.full(grid.num_basis, -40.0), beta, [0.2])
        assert loglik(xi, data, grid, bins) == pytest.approx(0.0, abs=1e-12)


def test_loglik_nonfinite_reports_unit(grids):
    grid, bins = grids
    data = SurvivalDataset([1.0, 2.0], [0, 1], np.ones((2, 1)), np.zeros((2, 1)))
    xi = LatentVector(np.full(grid.num_basis, 800.0), [0.0], [0.0])
    with np.errstate(over="ignore", invalid="ignore"), pytest.raises(NumericError) as exc_info:
        loglik(xi, data, grid, bins)
    assert exc_info.value.unit == 1


def test_unit_contributions_sum(grids):
    data, grid, bins, xi = make_instance(11)
    design = design_for(data, grid, bins)
    assert unit_loglik(xi, design).sum() == pytest.approx(loglik(xi, data, grid, bins))


def test_omega_partition_of_unity():
    data, grid, bins, xi = make_instance(12)
    cache = omega_cache(xi.theta, data, grid, bins)
    assert np.all(cache.omega0 > 0.0)
    assert np.all(cache.omega1 >= 0.0)
    np.testing.assert_allclose(cache.omega1.sum(axis=1), cache.omega0, rtol=1e-10, atol=0)


def test_riemann_sum_converges():
    """Écart au risque cumulé exact d'ordre Delta^2 (règle du point milieu)"""
    grid = KnotGrid(T_UPPER, 8)
    theta = np.linspace(-2.0, -0.5, 8)
    reference = -np.log(baseline_survival(theta, grid, BinGrid(300000, T_UPPER), T_UPPER))
    errors = [
        abs(-np.log(baseline_survival(theta, grid, BinGrid(J, T_UPPER), T_UPPER)) - reference)
        for J in (300, 3000)
    ]
    assert errors[1] < errors[0] / 20
    assert errors[0] < 1e-3


# ---------------------------------------------------------------------------
# Dérivées analytiques contre différences finies
# ---------------------------------------------------------------------------

INSTANCES = [(seed, "mixed") for seed in range(14)]
INSTANCES += [(seed, "all") for seed in range(100, 103)]
INSTANCES += [(seed, "one") for seed in range(200, 203)]


def _fd_gradient(f, x, h=1e-6):
    grad = np.empty_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        grad[k] = (f(x + e) - f(x - e)) / (2 * h)
    return grad


def _fd_jacobian(f, x, h=1e-6):
    columns = []
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        columns.append((f(x + e) - f(x - e)) / (2 * h))
    return np.column_stack(columns)


@pytest.mark.parametrize("seed,events", INSTANCES)
def test_gradient_matches_finite_differences(seed, events):
    data, grid, bins, xi = make_instance(seed, events=events)
    x0 = xi.flatten()
    analytic = loglik_gradient(xi, data, grid, bins)
    numeric = _fd_gradient(lambda x: loglik(x, data, grid, bins), x0)
    scale = np.maximum(1.0, np.abs(analytic))
    assert np.max(np.abs(analytic - numeric) / scale) < 1e-5


@pytest.mark.parametrize("seed,events", INSTANCES)
def test_hessian_matches_finite_differences(seed, events):
    data, grid, bins, xi = make_instance(seed, events=events)
    x0 = xi.flatten()
    H = loglik_hessian(xi, data, grid, bins)
    numeric = _fd_jacobian(lambda x: loglik_gradient(x, data, grid, bins), x0)
    scale = np.maximum(1.0, np.abs(H))
    assert np.max(np.abs(H - numeric) / scale) < 1e-4
    assert np.max(np.abs(H - H.T)) == 0.0


def test_gradient_all_events_theta_block():
    data, grid, bins, xi = make_instance(21, events="all")
    cache = omega_cache(xi.theta, data, grid, bins)
    design = design_for(data, grid, bins)
    ez = np.exp(data.Z @ xi.gamma)
    expected = design.basis_at_times.sum(axis=0) - ez @ cache.omega1
    grad = loglik_gradient(xi, data, grid, bins)
    np.testing.assert_allclose(grad[: grid.num_basis], expected, rtol=1e-12, atol=1e-12)


def test_hessian_all_events_logistic_block():
    data, grid, bins, xi = make_instance(22, events="all")
    K = grid.num_basis
    H = loglik_hessian(xi, data, grid, bins)
    p = expit(data.X @ xi.beta)
    expected = -(data.X * (p * (1 - p))[:, None]).T @ data.X
    np.testing.assert_allclose(H[K : K + 3, K : K + 3], expected, rtol=1e-12, atol=1e-14)


def test_censored_unit_gradient_vanishes_when_cured():
    """p(x) -> 0 : l'unité censurée ne contribue plus"""
    grid, bins = KnotGrid(T_UPPER, 8), BinGrid(60, T_UPPER)
    data = _one_unit(5.0, 0, [1.0], [0.4])
    xi = LatentVector(np.full(8, np.log(0.3)), [np.log(1e-12)], [0.2])
    grad = loglik_gradient(xi, data, grid, bins)
    np.testing.assert_allclose(grad, 0.0, atol=1e-10)


def test_permutation_invariance():
    data, grid, bins, xi = make_instance(31)
    order = np.random.default_rng(0).permutation(data.n)
    shuffled = data.take(order)
    assert loglik(xi, shuffled, grid, bins) == pytest.approx(
        loglik(xi, data, grid, bins), rel=1e-12
    )
    np.testing.assert_allclose(
        loglik_gradient(xi, shuffled, grid, bins),
        loglik_gradient(xi, data, grid, bins),
        rtol=1e-12,
        atol=1e-12,
    )
    np.testing.assert_allclose(
        loglik_hessian(xi, shuffled, grid, bins),
        loglik_hessian(xi, data, grid, bins),
        rtol=1e-12,
        atol=1e-12,
    )


def test_censored_contribution_increases_with_survival():
    """Réduire theta augmente S_p et donc g_i pour une unité censurée"""
    grid, bins = KnotGrid(T_UPPER, 8), BinGrid(60, T_UPPER)
    data = _one_unit(4.0, 0, [1.0, 0.5], [1.0])
    design = design_for(data, grid, bins)
    previous = -np.inf
    for shift in np.linspace(1.0, -3.0, 9):
        xi = LatentVector(np.full(8, shift), [0.3, -0.4], [0.1])
        g = unit_loglik(xi, design)[0]
        assert g >= previous
        previous = g
