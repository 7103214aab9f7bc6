import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gelfand.metric import hausdorff_linf
from gelfand.models import make_partition, true_boundary_distances, true_slice_boundary, true_slice_inner
from gelfand.reconstruct import (ReconstructionParams, ReconstructionTooLarge, RStar, accept_beta,
                                 assemble_rstar, boundary_key, enumerate_betas, inner_key, rstar_labels,
                                 rstar_to_metric_space, unit_ball_volume)


def synthetic_reports(params, N, seed, heavy=0.6):
    rng = np.random.default_rng(seed)
    eps = params.threshold
    return {q: float(eps * (2.0 if rng.random() < heavy else 0.5)) for q in enumerate_betas(params, N)}


def brute_force(reports, params, N):
    """Value vectors of every multi-index that passes the acceptance test."""
    out = set()
    for b0 in (0, 1):
        for rest in itertools.product(range(1, params.beta_max + 1), repeat=N):
            beta = (b0, *rest)
            if accept_beta(beta, reports, params):
                out.add(tuple(int(round(b * params.eta / (params.eta / 1024))) for b in rest))
    return out


def assembled_keys(rstar):
    return {tuple(int(round(v / (rstar.eta / 1024))) for v in f.values) for f in rstar.functions}


def true_reports(model, part, params):
    N = part.N
    out = {}
    for q in enumerate_betas(params, N):
        if q[0] == "inner":
            out[q] = true_slice_inner(model, part, q[1], params.eta)
        else:
            out[q] = true_slice_boundary(model, part, *q[1:], params.eta)
    return out


# -- parameters -----------------------------------------------------------


def test_default_threshold_is_half_an_eta_ball():
    assert ReconstructionParams(eta=0.2, i0=1, L=1, D=3).threshold == pytest.approx(0.2)
    p = ReconstructionParams(eta=0.1, i0=1, L=1, D=1, n=2)
    assert p.threshold == pytest.approx(math.pi * 0.01 / 2)
    assert unit_ball_volume(3) == pytest.approx(4 * math.pi / 3)


def test_beta_ranges():
    p = ReconstructionParams(eta=0.2, i0=1.0, L=1, D=math.pi)
    assert p.beta_max == 17  # floor(2 + pi / 0.2)
    assert p.boundary_beta_max == 2
    assert p.interior_beta_min == 3
    assert ReconstructionParams(eta=0.1, i0=1.0, L=1, D=1).satisfies_scale_condition()
    assert not p.satisfies_scale_condition()


def test_parameter_validation():
    with pytest.raises(ValueError):
        ReconstructionParams(eta=0, i0=1, L=1, D=1)
    with pytest.raises(ValueError):
        ReconstructionParams(eta=0.1, i0=1, L=-1, D=1)
    with pytest.raises(ValueError):
        ReconstructionParams(eta=0.1, i0=1, L=1, D=1, eps=0.0)


# -- enumeration ----------------------------------------------------------


@pytest.mark.parametrize("N,L,eta", [(2, 1, 0.4), (3, 1, 0.5), (4, 2, 0.7)])
def test_query_count_is_bounded(N, L, eta):
    p = ReconstructionParams(eta=eta, i0=1.0, L=L, D=2.0)
    queries = list(enumerate_betas(p, N))
    assert len(queries) == len(set(queries))
    bound = N ** 2 * (2 + p.D / eta) ** 2 * (p.beta_max - p.interior_beta_min + 1) ** max(L - 1, 0)
    assert len(queries) <= bound


def test_vanishing_injectivity_radius_leaves_interior_route():
    p = ReconstructionParams(eta=0.3, i0=1e-6, L=1, D=1.5)
    queries = list(enumerate_betas(p, 3))
    assert queries and all(q[0] == "inner" for q in queries)
    # each query fixes the L coordinate cells plus one free cell
    assert all(sum(b > 0 for b in q[1][1:]) == 2 for q in queries)


def test_boundary_queries_keep_k_first_minimum():
    p = ReconstructionParams(eta=0.25, i0=1.2, L=1, D=1.5)
    for q in enumerate_betas(p, 3):
        if q[0] == "boundary":
            _, k, bk, i, bi = q
            assert bk <= p.boundary_beta_max
            assert bi > bk if i < k else bi >= bk


# -- acceptance -----------------------------------------------------------


def test_accept_beta_examples():
    p = ReconstructionParams(eta=0.5, i0=1.0, L=1, D=1.0, eps=0.1)
    beta = (0, 2, 3)
    reports = {inner_key((0, 2, 3)): 0.2}
    assert accept_beta(beta, reports, p)
    assert not accept_beta(beta, {inner_key((0, 2, 3)): 0.05}, p)
    # beta_1 eta = 0.5 is not above i0 / 2
    assert not accept_beta((0, 1, 3), reports, p)
    with pytest.raises(KeyError):
        accept_beta((0, 3, 3), reports, p)


def test_accept_boundary_route_example():
    p = ReconstructionParams(eta=0.5, i0=1.0, L=1, D=1.0, eps=0.1)
    ok = {boundary_key(1, 1, 2, 3): 0.3}
    assert accept_beta((1, 1, 3), ok, p)
    assert not accept_beta((1, 1, 3), {boundary_key(1, 1, 2, 3): 0.0}, p)
    assert not accept_beta((1, 2, 3), ok, p)  # beta_k eta = 1 > i0 / 2
    with pytest.raises(ValueError):
        accept_beta((2, 1, 3), ok, p)


@pytest.mark.parametrize("N,L,eta,i0,seed", [(2, 1, 0.4, 1.0, 0), (3, 1, 0.5, 1.2, 1), (3, 2, 0.6, 1.5, 2),
                                              (3, 3, 0.6, 1.5, 3), (2, 1, 0.3, 0.05, 4)])
def test_box_assembly_matches_brute_force(N, L, eta, i0, seed):
    p = ReconstructionParams(eta=eta, i0=i0, L=L, D=1.6)
    reports = synthetic_reports(p, N, seed)
    assert assembled_keys(assemble_rstar(reports, p, N)) == brute_force(reports, p, N)


@given(st.integers(0, 10_000))
def test_box_assembly_matches_brute_force_random(seed):
    p = ReconstructionParams(eta=0.45, i0=1.0, L=1, D=1.4)
    reports = synthetic_reports(p, 3, seed, heavy=0.8)
    assert assembled_keys(assemble_rstar(reports, p, 3)) == brute_force(reports, p, 3)


def test_routes_respect_radius_split():
    p = ReconstructionParams(eta=0.4, i0=1.0, L=1, D=1.6)
    rstar = assemble_rstar(synthetic_reports(p, 3, 7, heavy=0.9), p, 3)
    assert len(rstar) > 0
    for f in rstar.functions:
        if f.route == "interior":
            assert min(f.values) > p.i0 / 2
        else:
            assert min(f.values) <= p.i0 / 2 + 1e-12
        assert f.values == pytest.approx(tuple(b * p.eta for b in f.beta[1:]))


def test_values_are_unique_and_sorted():
    p = ReconstructionParams(eta=0.4, i0=1.0, L=1, D=1.6)
    rstar = assemble_rstar(synthetic_reports(p, 3, 8, heavy=1.0), p, 3)
    vals = [f.values for f in rstar.functions]
    assert len(vals) == len(set(vals))
    assert vals == sorted(vals)


def test_raising_threshold_shrinks_rstar():
    base = ReconstructionParams(eta=0.4, i0=1.0, L=1, D=1.6, eps=0.1)
    rng = np.random.default_rng(3)
    reports = {q: float(rng.uniform(0, 1)) for q in enumerate_betas(base, 3)}
    sizes = []
    for eps in (0.05, 0.2, 0.5, 0.9, 1.5):
        p = ReconstructionParams(eta=0.4, i0=1.0, L=1, D=1.6, eps=eps)
        keys = assembled_keys(assemble_rstar(reports, p, 3))
        if sizes:
            assert keys <= sizes[-1]
        sizes.append(keys)
    assert sizes[-1] == set()


def test_point_budget_guard():
    p = ReconstructionParams(eta=0.4, i0=1.0, L=1, D=1.6, max_points=3)
    with pytest.raises(ReconstructionTooLarge):
        assemble_rstar(synthetic_reports(p, 3, 1, heavy=1.0), p, 3)


def test_report_order_does_not_matter():
    p = ReconstructionParams(eta=0.4, i0=1.0, L=1, D=1.6)
    reports = synthetic_reports(p, 3, 11)
    shuffled = dict(reversed(list(reports.items())))
    a, b = assemble_rstar(reports, p, 3), assemble_rstar(shuffled, p, 3)
    assert rstar_labels(a) == rstar_labels(b)


# -- metric space view ----------------------------------------------------


def test_metric_space_view():
    p = ReconstructionParams(eta=0.4, i0=1.0, L=1, D=1.6)
    rstar = assemble_rstar(synthetic_reports(p, 3, 5, heavy=0.9), p, 3)
    X = rstar_to_metric_space(rstar)
    d = X.dist
    assert X.size == len(rstar)
    assert np.array_equal(d, d.T) and np.all(np.diag(d) == 0)
    off = d[~np.eye(len(d), dtype=bool)]
    assert off.min() >= p.eta - 1e-12  # distinct multiples of eta differ by at least eta
    assert np.allclose(np.round(d / p.eta), d / p.eta, atol=1e-9)
    with pytest.raises(ValueError):
        rstar_to_metric_space(RStar([], {}, 0.4))


# -- exact slice volumes --------------------------------------------------


@pytest.mark.parametrize("eta", [0.4, 0.2])
def test_exact_volumes_recover_interval_distances(interval64, eta):
    model, _ = interval64
    part = make_partition(model, eta)
    p = ReconstructionParams(eta=eta, i0=math.pi, L=1, D=math.pi)
    rstar = assemble_rstar(true_reports(model, part, p), p, part.N)
    truth = true_boundary_distances(model, part, eta / 8)
    assert hausdorff_linf(rstar.values, truth.points) <= 3 * eta
