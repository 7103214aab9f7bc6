import math
from dataclasses import replace

import cvxpy as cp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gelfand.models import build_interval_model, make_partition, perturb_dataset
from gelfand.projection import (ConstraintThresholds, SolverConfig, build_thresholds, check_membership,
                                constraint_system, cutoff_projection, minimize_over_U, project_onto_U,
                                solve_projection)


def e(J, j=0):
    v = np.zeros(J)
    v[j] = 1.0
    return v


def reference_projection(a, mats, caps):
    """Nearest feasible point from an interior-point conic solver."""
    w = cp.Variable(a.size)
    cons = []
    for A, c in zip(mats, caps):
        evals, evecs = np.linalg.eigh(0.5 * (A + A.T))
        root = evecs * np.sqrt(np.clip(evals, 0, None))
        cons.append(cp.sum_squares(root.T @ w) <= c)
    prob = cp.Problem(cp.Minimize(cp.sum_squares(w - a)), cons)
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12)
    return np.asarray(w.value), float(prob.value)


@pytest.fixture(scope="module")
def interval16():
    model, ds = build_interval_model(math.pi, 16)
    return model, ds, make_partition(model, 0.2)


# -- thresholds -----------------------------------------------------------


def test_exact_data_caps(interval16):
    _, ds, _ = interval16
    thr = build_thresholds(8, 2.0, 0.5, 0.1, 0.0, ds, C0=1.5)
    assert thr.h1_bound == pytest.approx(3 * 1.5 * 2.0 * 0.5 ** -3, rel=1e-15)
    assert thr.h22_bound == 0.1


def test_unit_caps(interval16):
    _, ds, _ = interval16
    assert build_thresholds(4, 1.0, 1.0, 0.2, 0.0, ds).h1_bound == 3.0


def test_inflated_trace_cap():
    # lambda_J = 4 needs a dataset whose tenth eigenvalue is 4
    _, ds = build_interval_model(math.pi, 10)
    ds = replace(ds, lambdas=np.linspace(0, 4, 10))
    thr = build_thresholds(10, 1.0, 1.0, 0.1, 0.001, ds, C0p=1.0)
    assert thr.h22_bound == pytest.approx(0.18, rel=1e-14)
    assert thr.h1_bound ** 2 == pytest.approx(9 + 3 * 2 * 0.001, rel=1e-14)


def test_threshold_validation(interval16):
    _, ds, _ = interval16
    with pytest.raises(ValueError):
        build_thresholds(4, 1.0, 1.0, 0.1, -1e-3, ds)
    with pytest.raises(ValueError):
        build_thresholds(40, 1.0, 1.0, 0.1, 0.0, ds)


# -- membership -----------------------------------------------------------


def test_zero_is_member(interval16):
    _, ds, part = interval16
    thr = build_thresholds(8, 1.0, 1.0, 0.1, 0.0, ds)
    ok, slacks = check_membership(np.zeros(8), thr, ds, part, (0, 1, 1))
    assert ok
    assert dict(slacks) == {"h1": thr.h1_bound, "trace[1]": thr.h22_bound, "trace[2]": thr.h22_bound}


def test_constant_mode_fails_h1_cap(interval16):
    _, ds, part = interval16
    thr = replace(build_thresholds(4, 1.0, 1.0, 0.1, 0.0, ds), h1_bound=0.9)
    ok, slacks = check_membership(e(4), thr, ds, part, (0, 0, 0))
    assert not ok and slacks[0][1] == pytest.approx(-0.1)


def test_constant_mode_fails_trace_cap(interval16):
    _, ds, part = interval16
    thr = replace(build_thresholds(4, 1.0, 0.1, 0.1, 0.0, ds), h22_bound=0.5)
    ok, slacks = check_membership(e(4), thr, ds, part, (0, 1, 0))
    assert not ok
    assert dict(slacks)["trace[1]"] == pytest.approx(0.5 - math.sqrt(2 / math.pi), rel=1e-9)


def test_membership_needs_unit_ball(interval16):
    _, ds, part = interval16
    thr = build_thresholds(4, 1.0, 1.0, 0.1, 0.0, ds)
    with pytest.raises(ValueError):
        check_membership(2 * e(4), thr, ds, part, (0, 0, 0))


# -- minimisation ---------------------------------------------------------


def test_unconstrained_optimum_returned(interval16):
    _, ds, part = interval16
    thr = build_thresholds(8, 1.0, 0.5, 0.1, 0.0, ds)
    u = np.array([0.3, 0.2, -0.1, 0.0, 0.05, 0, 0, 0])
    assert np.allclose(minimize_over_U(u, thr, ds, part, (0, 0, 0)), u, atol=1e-12)


def test_zero_h1_cap_forces_zero(interval16):
    _, ds, part = interval16
    thr = replace(build_thresholds(4, 1.0, 1.0, 0.1, 0.0, ds), h1_bound=0.0)
    assert np.array_equal(minimize_over_U(e(4), thr, ds, part, (0, 0, 0)), np.zeros(4))


@pytest.mark.parametrize("cap", [0.1, 0.4, 0.7, 0.9])
def test_single_mode_problem_has_closed_form(interval16, cap):
    _, ds, part = interval16
    thr = replace(build_thresholds(1, 1.0, 0.1, 0.1, 0.0, ds), h22_bound=cap)
    out = minimize_over_U(e(1), thr, ds, part, (0, 1, 0))
    t = min(1.0, cap / math.sqrt(2 / math.pi))
    assert out[0] == pytest.approx(t, rel=1e-6)
    assert (1 - out[0]) ** 2 == pytest.approx((1 - t) ** 2, abs=1e-6)


def test_cutoff_examples():
    u = np.array([1.0, 0.0])
    assert np.array_equal(cutoff_projection(u, np.zeros(2)), u)
    assert np.array_equal(cutoff_projection(u, u), np.zeros(2))
    assert cutoff_projection(u, np.array([0.3, -0.1])) == pytest.approx([0.7, 0.1])
    with pytest.raises(ValueError):
        cutoff_projection(u, np.zeros(3))


alpha_values = st.sampled_from([0.0, 0.2, 0.6, 1.0, 1.8])


@given(st.lists(st.floats(-1, 1), min_size=12, max_size=12), alpha_values, alpha_values, alpha_values,
       st.sampled_from([0.01, 0.05, 0.2]))
def test_minimiser_is_feasible_and_no_worse_than_zero(interval16, coeffs, a0, a1, a2, eps1):
    _, ds, part = interval16
    u = np.array(coeffs)
    u /= max(1.0, np.linalg.norm(u))
    thr = build_thresholds(12, 1.0, 0.5, eps1, 0.0, ds)
    alpha = (a0, a1, a2)
    w = minimize_over_U(u, thr, ds, part, alpha)
    ok, _ = check_membership(w, thr, ds, part, alpha)
    assert ok
    assert np.sum((w - u) ** 2) <= np.sum(u ** 2) + 1e-9


def test_enlarging_caps_never_hurts(interval16, rng):
    _, ds, part = interval16
    for _ in range(8):
        u = rng.standard_normal(12)
        u /= np.linalg.norm(u)
        alpha = tuple(rng.choice([0.0, 0.4, 1.2], size=3))
        values = []
        for eps1 in (0.01, 0.03, 0.1, 0.3):
            thr = build_thresholds(12, 1.0, 0.5, eps1, 0.0, ds)
            w = minimize_over_U(u, thr, ds, part, alpha)
            values.append(float(np.sum((w - u) ** 2)))
        assert all(b <= a + 1e-9 for a, b in zip(values, values[1:]))


def test_inactive_alpha_leaves_u_untouched(interval16, rng):
    _, ds, part = interval16
    thr = build_thresholds(16, 1.0, 0.5, 0.03, 0.0, ds)
    u = rng.standard_normal(16) * 0.01
    w = minimize_over_U(u, thr, ds, part, (0, 0, 0))
    assert np.abs(cutoff_projection(u, w)).max() <= 1e-8


def test_unit_ball_enforced_for_perturbed_data(interval16):
    _, ds, part = interval16
    pert = perturb_dataset(ds, 1e-3, 1)
    thr = build_thresholds(8, 1.0, 0.1, 10.0, 1e-3, pert)
    assert thr.unit_ball
    u = np.array([1.5, 0, 0, 0, 0, 0, 0, 0.0])
    w = minimize_over_U(u, thr, pert, part, (0, 0, 0))
    assert np.linalg.norm(w) <= 1.0 + 1e-12
    assert w[0] == pytest.approx(1.0, abs=1e-6)


# -- independent solver cross-check ---------------------------------------


def random_instances(ds, part, rng, count, J):
    for _ in range(count):
        u = rng.standard_normal(J)
        u /= np.linalg.norm(u)
        if rng.random() < 0.5:
            u = e(J)
        alpha = tuple(rng.choice([0.0, 0.4, 1.0, 2.0], size=part.N + 1))
        eps1 = float(rng.choice([0.02, 0.05, 0.2]))
        yield u, build_thresholds(J, 1.0, 0.5, eps1, 0.0, ds), alpha


@pytest.mark.filterwarnings("ignore:Solution may be inaccurate")
def test_dual_solver_matches_conic_reference_interval(interval16):
    _, ds, part = interval16
    rng = np.random.default_rng(5)
    for u, thr, alpha in random_instances(ds, part, rng, 12, 12):
        mats, caps = constraint_system(thr, ds, part, alpha)
        ours = solve_projection(u, mats, caps)
        _, ref_obj = reference_projection(u, mats, caps)
        assert ours.objective == pytest.approx(ref_obj, abs=1e-6, rel=1e-5)


@pytest.mark.filterwarnings("ignore:Solution may be inaccurate")
def test_dual_solver_matches_conic_reference_disk(disk16):
    model, ds = disk16
    part = make_partition(model, 0.9, "sparse")
    rng = np.random.default_rng(9)
    for u, thr, alpha in random_instances(ds, part, rng, 6, 12):
        mats, caps = constraint_system(thr, ds, part, alpha)
        ours = solve_projection(u, mats, caps)
        w_ref, ref_obj = reference_projection(u, mats, caps)
        assert ours.objective == pytest.approx(ref_obj, abs=1e-6, rel=1e-5)
        assert np.linalg.norm(ours.coeffs - w_ref) < 1e-3


def test_penalty_solver_is_feasible_but_never_beats_dual(interval16):
    _, ds, part = interval16
    thr = build_thresholds(8, 1.0, 0.5, 0.05, 0.0, ds)
    u = e(8)
    dual = project_onto_U(u, thr, ds, part, (0, 1, 0))
    pen = project_onto_U(u, thr, ds, part, (0, 1, 0), SolverConfig(method="penalty"))
    ok, _ = check_membership(pen.coeffs, thr, ds, part, (0, 1, 0))
    assert ok
    # the dual optimum is a lower bound for every feasible point
    assert dual.objective <= pen.objective + 1e-9
    assert pen.objective < float(u @ u)


def test_solver_is_deterministic(interval16):
    _, ds, part = interval16
    thr = build_thresholds(16, 1.0, 0.5, 0.03, 0.0, ds)
    a = minimize_over_U(e(16), thr, ds, part, (0, 1.0, 0.4))
    b = minimize_over_U(e(16), thr, ds, part, (0, 1.0, 0.4))
    assert np.array_equal(a, b)


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig.from_dict({"method": "newton"})
    with pytest.raises(ValueError):
        SolverConfig.from_dict({"bogus": 1})
    assert SolverConfig.from_dict({"stages": 3}).stages == 3


def test_threshold_dataclass_roundtrip():
    thr = ConstraintThresholds(3.0, 0.1, 4, 9.0, 1.0, 1.0, 0.1, 0.0)
    assert not thr.unit_ball
