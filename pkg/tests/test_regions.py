"""Closed-form rate regions: values against independent oracles, identities."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latfun import (
    DegenerateSideInfo,
    DistortionOutOfRange,
    NonPositiveQ,
    OrthogonalScaling,
    SourceModel,
    bt_min_sum_curve,
    bt_min_sum_rate,
    bt_min_sum_rates,
    bt_optimal_q,
    bt_rate_point,
    bt_regime,
    independent_side_model,
    k_user_rates,
    lattice_feasible,
    lattice_min_sum_rate,
    lower_convex_envelope,
    noisy_function_side_model,
    optimal_scaling,
    scaling_region_rhs,
    side_info_region,
    single_cell_plan,
    singleton_plan,
    sum_rate_gap,
    two_user_model,
)
from latfun.regions import (
    REGIME_INTERIOR,
    REGIME_NUMERIC,
    REGIME_Q1_INFINITE,
    REGIME_Q2_INFINITE,
    REGIME_ZERO_RATE,
    bt_regime_boundary,
)

from oracles import bt_sum_rate_grid, bt_sum_rate_oracle

M88 = two_user_model(0.8, 0.8)


# ---------------------------------------------------------------------------
# direct lattice region


def test_lattice_min_sum_matches_numeric_minimization():
    # Oracle: scan R1, take the implied minimal R2 from the constraint.
    d, sz2 = 0.1, 0.36
    r1 = np.linspace(0.94, 8.0, 400_001)
    rhs = d / sz2 - 2.0 ** (-2 * r1)
    r2 = -0.5 * np.log2(rhs[rhs > 0])
    numeric = np.min(r1[rhs > 0] + r2)
    assert numeric == pytest.approx(math.log2(7.2), abs=1e-6)
    assert lattice_min_sum_rate(M88, 0.1) == pytest.approx(math.log2(7.2), rel=1e-12)


def test_lattice_boundary_point():
    sz2 = 0.36
    assert lattice_feasible(M88, 0.5, 0.5, sz2)
    assert not lattice_feasible(M88, 0.5, 0.49, sz2)


def test_lattice_single_encoder_limit():
    d, sz2 = 0.1, 0.36
    # With R1 effectively infinite the bound on R2 collapses to the
    # single-encoder value.
    r2_min = -0.5 * math.log2(d / sz2 - 2.0 ** (-2 * 60.0))
    assert r2_min == pytest.approx(0.5 * math.log2(sz2 / d), abs=1e-9)
    assert lattice_feasible(M88, 60.0, r2_min + 1e-9, d)


def test_lattice_distortion_range():
    with pytest.raises(DistortionOutOfRange):
        lattice_min_sum_rate(M88, 0.0)
    with pytest.raises(DistortionOutOfRange):
        lattice_min_sum_rate(M88, 0.5)


# ---------------------------------------------------------------------------
# quantize-and-bin region at fixed (q1, q2)


def test_bt_rate_point_example():
    pt = bt_rate_point(M88, 0.1, 0.1)
    assert pt.distortion == pytest.approx(0.06264 / 0.57, abs=1e-12)
    assert pt.r_sum == pytest.approx(0.5 * math.log2(57.0), abs=1e-12)


def test_bt_rate_point_large_q1_limit():
    # Sending nothing from encoder 1: distortion approaches the
    # single-encoder regime value that fixes q2.
    model = two_user_model(0.8, 1.5)
    alpha, sz2 = 0.36, 1.0 + 2.25 - 2.4
    d = 0.75  # above the finite regime boundary for c > 1
    q2 = (d - alpha) / (sz2 - d)
    pt = bt_rate_point(model, 1e9, q2)
    assert pt.distortion == pytest.approx(d, abs=1e-6)


def test_bt_rate_point_uncorrelated_factorizes():
    model = two_user_model(1e-9, 0.8)
    pt = bt_rate_point(model, 0.2, 0.3)
    expected = 0.5 * math.log2((1.2 * 1.3) / (0.2 * 0.3))
    assert pt.r_sum == pytest.approx(expected, abs=1e-6)


def test_bt_rate_point_rejects_nonpositive_q():
    with pytest.raises(NonPositiveQ):
        bt_rate_point(M88, 0.0, 0.1)


# ---------------------------------------------------------------------------
# optimal noise allocation


def test_bt_optimal_q_interior_values():
    opt = bt_optimal_q(M88, 0.1)
    assert opt.regime == REGIME_INTERIOR
    assert opt.q1 == pytest.approx(0.0288 / 0.416, abs=1e-9)
    assert opt.q2 == pytest.approx(0.036 / 0.2968, abs=1e-9)


def test_bt_optimal_q_matches_constrained_minimizer():
    # Oracle: numeric minimization of the sum rate, reading off the argmin.
    rho, c, d = 0.8, 0.8, 0.1
    alpha, sz2 = 0.36, 0.36
    q1v = np.geomspace(1e-3, 1e2, 1200)
    # On the distortion-equality curve, solve for q2 given q1.
    q2v = (alpha * d - q1v * (alpha - d)) / ((c * c * alpha - d) + q1v * (sz2 - d))
    ok = q2v > 0
    den = (1 + q1v[ok]) * (1 + q2v[ok]) - rho * rho
    rate = 0.5 * np.log2(den / (q1v[ok] * q2v[ok]))
    i = np.argmin(rate)
    opt = bt_optimal_q(M88, d)
    assert q1v[ok][i] == pytest.approx(opt.q1, rel=5e-3)
    assert q2v[ok][i] == pytest.approx(opt.q2, rel=5e-3)


def test_bt_optimal_q_regime_switch():
    boundary = 2 * 0.36 * 0.64 / 1.64
    assert boundary == pytest.approx(0.280976, abs=1e-6)
    opt = bt_optimal_q(M88, 0.3)
    assert opt.regime == REGIME_Q2_INFINITE
    assert math.isinf(opt.q2)
    big_c = two_user_model(0.8, 1.5)
    opt2 = bt_optimal_q(big_c, 0.8)
    assert opt2.regime == REGIME_Q1_INFINITE
    assert math.isinf(opt2.q1)


def test_bt_optimal_q_meets_distortion_with_equality():
    for d in [0.05, 0.1, 0.2, 0.27]:
        opt = bt_optimal_q(M88, d)
        pt = bt_rate_point(M88, opt.q1, opt.q2)
        assert pt.distortion == pytest.approx(d, abs=1e-9)


def test_bt_optimal_q_out_of_range():
    with pytest.raises(DistortionOutOfRange):
        bt_optimal_q(M88, 0.36)


# ---------------------------------------------------------------------------
# minimum sum rate


def test_bt_min_sum_interior_value_vs_oracle():
    got = bt_min_sum_rate(M88, 0.1)
    assert got == pytest.approx(0.5 * math.log2(66.56), abs=1e-12)
    assert abs(got - bt_sum_rate_oracle(0.8, 0.8, 0.1)) < 1e-4


def test_bt_min_sum_infinite_regime_value_vs_oracle():
    got = bt_min_sum_rate(M88, 0.3)
    assert got == pytest.approx(0.5 * math.log2(0.1296 / 0.0696), abs=1e-12)
    assert abs(got - bt_sum_rate_oracle(0.8, 0.8, 0.3)) < 1e-4


def test_bt_min_sum_zero_beyond_function_variance():
    assert bt_min_sum_rate(M88, 0.36) == 0.0
    assert bt_min_sum_rate(M88, 5.0) == 0.0
    assert bt_regime(M88, 0.4) == REGIME_ZERO_RATE


def test_bt_min_sum_continuous_at_regime_boundary():
    boundary = bt_regime_boundary(M88)
    below = bt_min_sum_rate(M88, boundary * (1 - 1e-9))
    above = bt_min_sum_rate(M88, boundary * (1 + 1e-9))
    assert abs(below - above) < 1e-6


def test_bt_min_sum_monotone_in_distortion():
    d = np.geomspace(0.005, 0.359, 300)
    vals = [bt_min_sum_rate(M88, float(x)) for x in d]
    assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))


def test_bt_min_sum_numeric_path_vs_grid_oracle():
    # The 2-D grid oracle upper-bounds the true minimum; the library's
    # numeric path must sit at or below it, within the grid's resolution.
    model = two_user_model(0.8, -0.5)
    for d in [0.2, 0.8, 1.5]:
        got = bt_min_sum_rate(model, d)
        grid = bt_sum_rate_grid(0.8, -0.5, d)
        assert got <= grid + 1e-9
        assert grid - got < 0.03
    assert bt_regime(model, 0.2) == REGIME_NUMERIC


def test_bt_min_sum_numeric_path_recovers_closed_form():
    # Positive c has a closed form; the numeric machinery must reproduce it.
    from latfun.regions import _bt_min_sum_numeric

    for rho, c, d in [(0.8, 0.8, 0.1), (0.8, 0.8, 0.3), (0.5, 1.5, 0.9), (0.3, 0.25, 0.37)]:
        model = two_user_model(rho, c)
        assert _bt_min_sum_numeric(rho, c, d) == pytest.approx(
            bt_min_sum_rate(model, d), abs=1e-9
        )


def test_bt_min_sum_batch_agrees_with_scalar():
    d = np.array([0.05, 0.1, 0.3])
    batch = bt_min_sum_rates(M88, d)
    single = [bt_min_sum_rate(M88, float(x)) for x in d]
    assert batch == pytest.approx(single, abs=1e-12)
    neg = two_user_model(0.8, -0.5)
    d2 = np.array([0.2, 0.8])
    batch2 = bt_min_sum_rates(neg, d2)
    single2 = [bt_min_sum_rate(neg, float(x)) for x in d2]
    assert batch2 == pytest.approx(single2, abs=1e-6)


# ---------------------------------------------------------------------------
# envelope


def test_lower_convex_envelope_leaves_convex_curve():
    x = np.linspace(0.1, 2.0, 50)
    y = 1.0 / x
    assert lower_convex_envelope(x, y) == pytest.approx(y, rel=1e-12)


def test_lower_convex_envelope_cuts_concave_bump():
    x = np.linspace(0.0, 1.0, 101)
    y = np.sin(np.pi * x)  # concave bump; envelope is the zero chord
    env = lower_convex_envelope(x, y)
    assert np.all(env <= y + 1e-12)
    assert env[50] == pytest.approx(0.0, abs=1e-12)


def test_bt_min_sum_curve_envelope_below_pointwise():
    d, pointwise, envelope = bt_min_sum_curve(M88, n_points=512)
    assert np.all(envelope <= pointwise + 1e-12)
    # The small-distortion stretch is already convex: envelope == curve there.
    head = d < 0.15
    assert envelope[head] == pytest.approx(pointwise[head], abs=1e-9)
    # Strictly below somewhere in the concave stretch before the boundary.
    mid = (d > 0.22) & (d < 0.3)
    assert np.any(envelope[mid] < pointwise[mid] - 1e-4)


# ---------------------------------------------------------------------------
# K-user rates


def test_k_user_two_singletons_example():
    point = k_user_rates(M88, singleton_plan(2, (0.1, 0.1)))
    assert point.rates[0] == pytest.approx(0.5 * math.log2(11.0), abs=1e-12)
    st2 = 0.64 - 0.4096 / 1.1
    assert point.rates[1] == pytest.approx(0.5 * math.log2((st2 + 0.1) / 0.1), abs=1e-12)
    assert point.distortion == pytest.approx(0.04968 / 0.4044, abs=1e-12)


def test_k_user_single_cell_recovers_direct_region():
    sz2 = 0.36
    d = 0.17
    qa = sz2 * d / (sz2 - d)
    point = k_user_rates(M88, single_cell_plan(2, (qa / 3, 2 * qa / 3)))
    total = sum(2.0 ** (-2 * r) for r in point.rates)
    assert total == pytest.approx(d / sz2, abs=1e-12)
    assert point.distortion == pytest.approx(d, abs=1e-12)


def test_k_user_three_sources_single_cell():
    model = SourceModel(np.eye(3), np.ones(3))
    point = k_user_rates(model, single_cell_plan(3, (0.1, 0.1, 0.1)))
    assert point.rates == pytest.approx([0.5 * math.log2(33.0)] * 3, abs=1e-12)
    assert point.distortion == pytest.approx(3.0 * 0.3 / 3.3, abs=1e-12)


def test_k_user_corner_matches_bt_under_rescaled_noise(rng):
    # Singleton-cell rates equal a corner of the quantize-and-bin region
    # once the second noise is expressed in the function's scale (q2 / c^2).
    for _ in range(30):
        rho = float(rng.uniform(0.05, 0.95))
        c = float(rng.uniform(0.1, 2.0))
        q1 = float(10 ** rng.uniform(-3, 1))
        q2 = float(10 ** rng.uniform(-3, 1))
        model = two_user_model(rho, c)
        point = k_user_rates(model, singleton_plan(2, (q1, q2)))
        bt = bt_rate_point(model, q1, q2 / c**2)
        corner, _ = bt.corner_points()
        assert point.rates[0] == pytest.approx(corner.rates[0], abs=1e-12)
        assert point.rates[1] == pytest.approx(corner.rates[1], abs=1e-12)
        assert point.distortion == pytest.approx(bt.distortion, abs=1e-12)


# ---------------------------------------------------------------------------
# side information


def test_side_info_independent_reduces_to_plain_region():
    region = side_info_region(independent_side_model(0.8, 0.8), 0.1)
    assert region.rhs == pytest.approx(0.1 / 0.36)
    assert region.min_sum_rate == pytest.approx(math.log2(7.2))


def test_side_info_noisy_function_value():
    region = side_info_region(noisy_function_side_model(0.8, 0.8, 0.1), 0.05)
    assert region.innovations_variance == pytest.approx(0.36 * 0.1 / 0.46)


def test_side_info_degenerate_rejected():
    with pytest.raises(DegenerateSideInfo):
        side_info_region(noisy_function_side_model(0.8, 0.8, 0.0), 0.01)


def test_side_info_distortion_range():
    with pytest.raises(DistortionOutOfRange):
        side_info_region(noisy_function_side_model(0.8, 0.8, 0.1), 0.2)


# ---------------------------------------------------------------------------
# scaling analysis


def test_scaling_rhs_at_function_direction():
    got = scaling_region_rhs(M88, 0.1, [1.0, -0.8])
    assert got == pytest.approx(0.1 / 0.36, abs=1e-12)


@given(xi=st.floats(-100.0, 100.0).filter(lambda v: abs(v) > 1e-3))
@settings(max_examples=60, deadline=None)
def test_scaling_rhs_scale_invariant(xi):
    base = scaling_region_rhs(M88, 0.1, [1.0, -0.8])
    scaled = scaling_region_rhs(M88, 0.1, [xi, -0.8 * xi])
    assert scaled == pytest.approx(base, abs=1e-12)


def test_scaling_perturbation_strictly_worse():
    c = np.array([1.0, -0.8])
    base = scaling_region_rhs(M88, 0.1, c)
    sigma_c = M88.cov @ c
    orth = np.array([-sigma_c[1], sigma_c[0]])  # orthogonal to c under Sigma
    perturbed = scaling_region_rhs(M88, 0.1, c + 0.1 * orth / np.linalg.norm(orth))
    assert perturbed < base - 1e-6


def test_scaling_orthogonal_direction_rejected():
    c = np.array([1.0, -0.8])
    sigma_c = M88.cov @ c
    orth = np.array([-sigma_c[1], sigma_c[0]])
    with pytest.raises(OrthogonalScaling):
        scaling_region_rhs(M88, 0.1, orth)


def test_optimal_scaling_grid_two_user():
    opt = optimal_scaling(M88, 0.1, directions=1024)
    c_unit = np.array([1.0, -0.8]) / np.linalg.norm([1.0, -0.8])
    cosang = abs(float(opt.direction @ c_unit))
    assert math.acos(min(cosang, 1.0)) < 2 * math.pi / 1024 + 1e-9


# ---------------------------------------------------------------------------
# scheme comparison


def test_sum_rate_gap_values():
    assert sum_rate_gap(0.8, 0.8, 0.1) == pytest.approx(
        0.5 * math.log2(66.56) - math.log2(7.2), abs=1e-12
    )
    assert sum_rate_gap(0.8, 0.8, 0.3) < 0


def test_sum_rate_gap_negative_c_never_wins():
    for d in [0.1, 0.5, 1.0, 1.8]:
        assert sum_rate_gap(0.8, -0.5, d) <= 0


def test_sum_rate_gap_validation():
    with pytest.raises(ValueError):
        sum_rate_gap(0.0, 0.8, 0.1)
    with pytest.raises(DistortionOutOfRange):
        sum_rate_gap(0.8, 0.8, 0.36)
