import numpy as np
import pytest

from sinkloss import (
    CostMatrix,
    DimensionMismatch,
    Grid1D,
    Histogram,
    MassTooSmall,
    NotConvergedWarning,
    SinkhornConfig,
    entropy,
    finite_difference_gradient,
    gradients,
    index_grid_cost,
    random_histogram,
    reference_solve,
    regularized_cost,
    run_sinkhorn,
    separated_bumps,
    transport_plan,
    validate_histogram,
    w1_1d_exact,
)
from conftest import random_cost, random_pair


# ---------------------------------------------------------------------------
# exact 1-D transport


def test_w1_identical_measures_is_zero():
    rng = np.random.default_rng(1)
    mu, _ = random_pair(rng, 10)
    grid = Grid1D(positions=np.linspace(0, 1, 10))
    assert w1_1d_exact(mu, mu, grid) == 0.0


def test_w1_point_masses_at_opposite_ends():
    d = 7
    mu = validate_histogram(np.r_[1.0, np.zeros(d - 1)])
    nu = validate_histogram(np.r_[np.zeros(d - 1), 1.0])
    grid = Grid1D(positions=np.arange(d, dtype=float))
    assert w1_1d_exact(mu, nu, grid) == pytest.approx(d - 1.0, rel=1e-15)


def test_w1_hand_evaluated_cdf_sum():
    mu = validate_histogram([0.5, 0.5, 0.0])
    nu = validate_histogram([0.0, 0.5, 0.5])
    grid = Grid1D(positions=np.array([0.0, 1.0, 2.0]))
    # |0.5 - 0| * 1 + |1 - 0.5| * 1
    assert w1_1d_exact(mu, nu, grid) == pytest.approx(1.0, rel=1e-15)


def test_w1_dimension_mismatch():
    rng = np.random.default_rng(2)
    mu, _ = random_pair(rng, 4)
    _, nu = random_pair(rng, 5)
    with pytest.raises(DimensionMismatch):
        w1_1d_exact(mu, nu, Grid1D(positions=np.linspace(0, 1, 4)))


def test_grid_must_increase():
    with pytest.raises(ValueError):
        Grid1D(positions=np.array([0.0, 2.0, 1.0]))


def test_w1_independent_of_solver_matches_tight_solve():
    # cross-validation of the two routes at small lam
    rng = np.random.default_rng(3)
    mu, nu, grid = separated_bumps(24, rng)
    c = CostMatrix(cost=np.abs(grid.positions[:, None] - grid.positions[None, :]))
    result = reference_solve(mu, nu, c, lam=0.005)
    w1 = w1_1d_exact(mu, nu, grid)
    assert result.cost_e0 == pytest.approx(w1, rel=0.02)


# ---------------------------------------------------------------------------
# finite differences


def test_linear_functional_recovers_projected_gradient():
    # harness mode: finite differences of a linear map are exact up to
    # roundoff, so the probe scheme itself is what gets validated
    rng = np.random.default_rng(4)
    d = 12
    mu, nu = random_pair(rng, d)
    c = random_cost(rng, d, d)
    w_mu = rng.normal(size=d)
    w_nu = rng.normal(size=d)

    def linear_loss(m, n):
        return float(w_mu @ m + w_nu @ n)

    got = finite_difference_gradient(
        mu, nu, c, SinkhornConfig(lam=1.0), eps=1e-6, loss=linear_loss
    )
    np.testing.assert_allclose(got.grad_mu, w_mu - w_mu.mean(), atol=1e-9)
    np.testing.assert_allclose(got.grad_nu, w_nu - w_nu.mean(), atol=1e-9)


def test_probe_outputs_are_mean_zero():
    rng = np.random.default_rng(5)
    d = 8
    mu, nu = random_pair(rng, d)
    c = random_cost(rng, d, d)
    g = finite_difference_gradient(mu, nu, c, SinkhornConfig(lam=0.3, max_iters=300, tolerance=0.0))
    assert abs(g.grad_mu.sum()) <= 1e-12
    assert abs(g.grad_nu.sum()) <= 1e-12


def test_mass_too_small_rejected():
    mu = validate_histogram([1e-9, 0.5, 0.5 - 1e-9])
    nu = validate_histogram([0.4, 0.3, 0.3])
    c = CostMatrix(cost=np.zeros((3, 3)))
    with pytest.raises(MassTooSmall) as exc:
        finite_difference_gradient(mu, nu, c, SinkhornConfig(lam=1.0), eps=1e-6)
    assert exc.value.index == 0


def test_probe_ordering_does_not_matter():
    rng = np.random.default_rng(6)
    d = 6
    mu, nu = random_pair(rng, d)
    c = random_cost(rng, d, d)
    config = SinkhornConfig(lam=0.5, max_iters=200, tolerance=0.0)
    serial = finite_difference_gradient(mu, nu, c, config, workers=1)
    threaded = finite_difference_gradient(mu, nu, c, config, workers=4)
    np.testing.assert_array_equal(serial.grad_mu, threaded.grad_mu)
    np.testing.assert_array_equal(serial.grad_nu, threaded.grad_nu)


def test_richardson_ratio_shows_second_order_convergence():
    rng = np.random.default_rng(7)
    d = 8
    mu, nu = random_pair(rng, d)
    c = index_grid_cost(d, power=2)
    config = SinkhornConfig(lam=0.1, max_iters=4000, tolerance=1e-13, check_interval=5)

    estimates = {}
    for eps in (2e-3, 1e-3, 5e-4):
        g = finite_difference_gradient(mu, nu, c, config, eps=eps)
        estimates[eps] = np.r_[g.grad_mu, g.grad_nu]
    step1 = np.linalg.norm(estimates[2e-3] - estimates[1e-3])
    step2 = np.linalg.norm(estimates[1e-3] - estimates[5e-4])
    ratio = step1 / step2
    assert 3.5 <= ratio <= 4.5


def test_analytic_gradient_is_exact_for_regularised_objective():
    # envelope property: the multiplier gradient differentiates the
    # regularised objective; probing that functional must agree to
    # quadrature accuracy, pinning the formula and its sign
    rng = np.random.default_rng(8)
    d = 10
    mu, nu = random_pair(rng, d)
    c = index_grid_cost(d, power=2)
    lam = 0.1
    config = SinkhornConfig(lam=lam, max_iters=20000, tolerance=1e-13, check_interval=10)

    def regularised_loss(m, n):
        result = run_sinkhorn(validate_histogram(m), validate_histogram(n), c, config)
        plan = transport_plan(result.potentials, c)
        return regularized_cost(plan, c, lam)

    numeric = finite_difference_gradient(mu, nu, c, config, loss=regularised_loss)
    analytic = gradients(run_sinkhorn(mu, nu, c, config).potentials)
    np.testing.assert_allclose(analytic.grad_mu, numeric.grad_mu, atol=5e-9)
    np.testing.assert_allclose(analytic.grad_nu, numeric.grad_nu, atol=5e-9)


# ---------------------------------------------------------------------------
# reference solver


def test_reference_solve_closed_form(symmetric_2x2):
    result = reference_solve(
        symmetric_2x2["mu"], symmetric_2x2["nu"], symmetric_2x2["c"], lam=1.0
    )
    assert result.cost_e0 == pytest.approx(symmetric_2x2["e0"], abs=1e-12)


def test_reference_agrees_with_default_solver():
    rng = np.random.default_rng(9)
    for seed in range(3):
        mu, nu = random_pair(np.random.default_rng(90 + seed), 15)
        c = random_cost(rng, 15, 15)
        config = SinkhornConfig(lam=0.2, max_iters=5000, tolerance=1e-8)
        loose = run_sinkhorn(mu, nu, c, config)
        tight = reference_solve(mu, nu, c, lam=0.2)
        assert loose.converged
        # marginal residual controls the cost gap through the dual pairing
        assert abs(loose.cost_e0 - tight.cost_e0) <= 50 * config.tolerance


def test_reference_identical_marginals_small_lam_costs_vanish():
    rng = np.random.default_rng(10)
    d = 12
    mu = random_histogram(d, rng)
    base = rng.uniform(0.5, 1.0, (d, d))
    np.fill_diagonal(base, 0.0)
    c = CostMatrix(cost=base)
    max_c = float(base.max())
    result = reference_solve(mu, mu, c, lam=1e-3 * max_c)
    assert result.cost_e0 < 1e-2 * max_c


def test_reference_warns_when_floor_unreachable():
    rng = np.random.default_rng(11)
    mu, nu = random_pair(rng, 6)
    c = random_cost(rng, 6, 6, scale=2000.0)
    with pytest.warns(NotConvergedWarning):
        result = reference_solve(mu, nu, c, lam=0.01)
    assert not result.converged
    assert result.final_residual > 1e-13


# ---------------------------------------------------------------------------
# continuation toward the exact 1-D value


@pytest.mark.parametrize("seed", range(5))
def test_lambda_continuation_on_line(seed):
    rng = np.random.default_rng(700 + seed)
    mu, nu, grid = separated_bumps(32, rng)
    c = CostMatrix(cost=np.abs(grid.positions[:, None] - grid.positions[None, :]))
    w1 = w1_1d_exact(mu, nu, grid)
    gaps = []
    for lam in (0.1, 0.03, 0.01):
        config = SinkhornConfig(lam=lam, max_iters=100000, tolerance=1e-10, check_interval=20)
        result = run_sinkhorn(mu, nu, c, config)
        assert result.converged
        gaps.append(abs(result.cost_e0 - w1))
    assert gaps[0] >= gaps[1] - 1e-12 and gaps[1] >= gaps[2] - 1e-12
    assert gaps[2] < 0.02 * w1
