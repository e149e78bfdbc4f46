import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import logsumexp as scipy_logsumexp

from sinkloss import (
    CostMatrix,
    NaNInput,
    OnlineLseAccumulator,
    ShapeMismatch,
    accumulator_merge,
    fused_log_reduction,
    log_sinkhorn_step,
    logsumexp_online,
)
from conftest import random_cost, random_pair

NEG_INF = float("-inf")

finite_floats = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False)


# ---------------------------------------------------------------------------
# single-pass logsumexp


def test_two_equal_terms():
    assert logsumexp_online([0.0, 0.0]) == pytest.approx(math.log(2.0), rel=1e-15)


def test_shift_does_not_overflow():
    assert logsumexp_online([1000.0, 1000.0]) == pytest.approx(1000.0 + math.log(2.0), rel=1e-15)


def test_neg_inf_entries_drop_out():
    assert logsumexp_online([NEG_INF, 0.0]) == 0.0


def test_empty_and_all_neg_inf_return_neg_inf():
    assert logsumexp_online([]) == NEG_INF
    assert logsumexp_online([NEG_INF, NEG_INF]) == NEG_INF


def test_nan_input_rejected():
    with pytest.raises(NaNInput):
        logsumexp_online([0.0, float("nan")])


@given(st.lists(finite_floats, min_size=1, max_size=64))
@settings(max_examples=200, deadline=None)
def test_online_matches_two_pass(xs):
    got = logsumexp_online(xs)
    want = float(scipy_logsumexp(np.asarray(xs)))
    # a few ulp of the max-extracted two-pass formula
    tol = 4.0 * np.spacing(max(abs(want), 1.0))
    assert abs(got - want) <= tol


@given(st.lists(finite_floats, min_size=1, max_size=32), st.floats(min_value=-1e3, max_value=1e3))
@settings(max_examples=200, deadline=None)
def test_shift_covariance(xs, shift):
    base = logsumexp_online(xs)
    shifted = logsumexp_online([x + shift for x in xs])
    assert shifted == pytest.approx(base + shift, abs=1e-12 * max(1.0, abs(base + shift)))


# ---------------------------------------------------------------------------
# streaming accumulator


def test_merge_duplicate_element():
    merged = accumulator_merge(OnlineLseAccumulator.of([0.0]), OnlineLseAccumulator.of([0.0]))
    assert merged.finalise() == pytest.approx(math.log(2.0), rel=1e-15)
    assert merged.count == 2


def test_merge_with_empty_is_identity():
    xs = [0.3, -1.2, 4.0]
    acc = OnlineLseAccumulator.of(xs)
    merged = accumulator_merge(OnlineLseAccumulator(), acc)
    assert merged.finalise() == acc.finalise()
    assert merged.count == acc.count


def test_empty_accumulator_finalises_to_neg_inf():
    assert OnlineLseAccumulator().finalise() == NEG_INF


def test_exhaustive_split_points_match_offline():
    rng = np.random.default_rng(64)
    xs = rng.uniform(-50.0, 50.0, 64)
    want = float(scipy_logsumexp(xs))
    for split in range(65):
        left = OnlineLseAccumulator.of(xs[:split])
        right = OnlineLseAccumulator.of(xs[split:])
        assert accumulator_merge(left, right).finalise() == pytest.approx(want, abs=1e-13)


def test_merge_commutative_and_associative():
    rng = np.random.default_rng(7)
    a = OnlineLseAccumulator.of(rng.uniform(-5, 5, 10))
    b = OnlineLseAccumulator.of(rng.uniform(-5, 5, 7))
    c = OnlineLseAccumulator.of(rng.uniform(-5, 5, 13))
    ab_c = accumulator_merge(accumulator_merge(a, b), c).finalise()
    a_bc = accumulator_merge(a, accumulator_merge(b, c)).finalise()
    ba_c = accumulator_merge(accumulator_merge(b, a), c).finalise()
    assert ab_c == pytest.approx(a_bc, abs=1e-13)
    assert ab_c == pytest.approx(ba_c, abs=1e-13)


@given(
    st.lists(st.floats(min_value=-100, max_value=100), min_size=0, max_size=24),
    st.lists(st.floats(min_value=-100, max_value=100), min_size=0, max_size=24),
)
@settings(max_examples=150, deadline=None)
def test_merge_law(xs, ys):
    merged = accumulator_merge(OnlineLseAccumulator.of(xs), OnlineLseAccumulator.of(ys))
    combined = xs + ys
    want = float(scipy_logsumexp(np.asarray(combined))) if combined else NEG_INF
    got = merged.finalise()
    if want == NEG_INF:
        assert got == NEG_INF
    else:
        assert got == pytest.approx(want, abs=1e-13)


def test_vectorised_cells_match_scalar_accumulators():
    rng = np.random.default_rng(12)
    slices = [rng.uniform(-10, 10, (3, 4)) for _ in range(9)]
    grid = OnlineLseAccumulator((3, 4))
    for s in slices:
        grid.consume(s)
    out = grid.finalise()
    stacked = np.stack(slices, axis=0)
    for b in range(3):
        for j in range(4):
            assert out[b, j] == pytest.approx(
                logsumexp_online(stacked[:, b, j]), abs=1e-13
            )


def test_consume_neg_inf_slices():
    acc = OnlineLseAccumulator((2,))
    acc.consume([NEG_INF, 0.0])
    acc.consume([NEG_INF, NEG_INF])
    out = acc.finalise()
    assert out[0] == NEG_INF
    assert out[1] == pytest.approx(0.0, abs=1e-15)


def test_consume_shape_mismatch():
    acc = OnlineLseAccumulator((2, 3))
    with pytest.raises(ShapeMismatch):
        acc.consume(np.zeros((2, 2)))


# ---------------------------------------------------------------------------
# fused reduction


def test_batch_of_one_reproduces_single_pair_update():
    rng = np.random.default_rng(5)
    d = 12
    mu, nu = random_pair(rng, d)
    c = random_cost(rng, d, d)
    lam = 0.7
    log_u = rng.normal(size=d)
    with np.errstate(divide="ignore"):
        log_mu, log_nu = np.log(mu.mass), np.log(nu.mass)

    expected_v, _ = log_sinkhorn_step(log_u, c, lam, log_mu, log_nu)
    got = fused_log_reduction(log_u[None, :], c, lam, log_nu[None, :])
    np.testing.assert_allclose(got[0], expected_v, atol=1e-13)


def test_batch_of_sixteen_equals_loop_of_single_calls():
    rng = np.random.default_rng(6)
    B, d1, d2 = 16, 10, 14
    c = random_cost(rng, d1, d2)
    lam = 0.4
    log_u = rng.normal(size=(B, d1))
    nus = np.stack([random_pair(rng, d2)[0].mass for _ in range(B)])
    with np.errstate(divide="ignore"):
        log_nu = np.log(nus)

    got = fused_log_reduction(log_u, c, lam, log_nu)
    for b in range(B):
        single = fused_log_reduction(log_u[b : b + 1], c, lam, log_nu[b : b + 1])
        np.testing.assert_allclose(got[b], single[0], atol=1e-12)


@pytest.mark.parametrize("workers", [2, 8])
def test_worker_count_does_not_change_results(workers):
    rng = np.random.default_rng(8)
    B, d1, d2 = 4, 33, 29
    c = random_cost(rng, d1, d2)
    log_u = rng.normal(size=(B, d1))
    log_nu = np.log(np.stack([random_pair(rng, d2)[0].mass for _ in range(B)]))
    base = fused_log_reduction(log_u, c, 0.5, log_nu, workers=1)
    got = fused_log_reduction(log_u, c, 0.5, log_nu, workers=workers)
    assert np.abs(got - base).max() <= 1e-13


def test_zero_mass_target_stays_neg_inf():
    rng = np.random.default_rng(9)
    d = 6
    c = random_cost(rng, d, d)
    log_u = np.zeros((1, d))
    with np.errstate(divide="ignore"):
        log_nu = np.log(np.array([[0.0, 0.2, 0.2, 0.2, 0.2, 0.2]]))
    out = fused_log_reduction(log_u, c, 1.0, log_nu)
    assert out[0, 0] == NEG_INF
    assert np.isfinite(out[0, 1:]).all()


def test_fused_shape_checks():
    rng = np.random.default_rng(10)
    c = random_cost(rng, 5, 6)
    with pytest.raises(ShapeMismatch):
        fused_log_reduction(np.zeros((2, 4)), c, 1.0, np.zeros((2, 6)))
    with pytest.raises(ShapeMismatch):
        fused_log_reduction(np.zeros((2, 5)), c, 1.0, np.zeros((3, 6)))
    with pytest.raises(ShapeMismatch):
        fused_log_reduction(np.zeros(5), c, 1.0, np.zeros(6))


def test_transposed_roles_give_u_update():
    rng = np.random.default_rng(11)
    d1, d2 = 7, 9
    mu, _ = random_pair(rng, d1)
    _, nu = random_pair(rng, d2)
    c = random_cost(rng, d1, d2)
    lam = 0.6
    log_u = rng.normal(size=d1)
    with np.errstate(divide="ignore"):
        log_mu, log_nu = np.log(mu.mass), np.log(nu.mass)
    log_v, log_u_next = log_sinkhorn_step(log_u, c, lam, log_mu, log_nu)

    got = fused_log_reduction(
        log_v[None, :], CostMatrix(cost=np.ascontiguousarray(c.cost.T)), lam, log_mu[None, :]
    )
    np.testing.assert_allclose(got[0], log_u_next, atol=1e-13)
