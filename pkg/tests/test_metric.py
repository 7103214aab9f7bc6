import itertools
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gelfand.jsonio import dumps
from gelfand.metric import (FiniteMetricSpace, correspondence_distortion, evaluate_run, gh_bound, gh_exact,
                            gh_lower_bound, gh_upper_bound, hausdorff_linf, linf_distance_matrix,
                            random_metric_space)


def space(matrix):
    d = np.asarray(matrix, dtype=float)
    return FiniteMetricSpace(tuple(f"p{i}" for i in range(len(d))), d)


def gh_all_relations(x, y):
    """Minimum over every relation that covers both sides; feasible for tiny spaces."""
    cells = list(itertools.product(range(x.size), range(y.size)))
    best = np.inf
    for mask in range(1, 1 << len(cells)):
        pairs = [c for b, c in enumerate(cells) if mask >> b & 1]
        if {p for p, _ in pairs} != set(range(x.size)) or {q for _, q in pairs} != set(range(y.size)):
            continue
        best = min(best, correspondence_distortion(x.dist, y.dist, pairs))
    return 0.5 * best


# -- Hausdorff ------------------------------------------------------------


def test_hausdorff_examples():
    a = np.array([[0.0, 0.0], [1.0, 1.0]])
    assert hausdorff_linf(a, a) == 0.0
    assert hausdorff_linf(a, a[:1]) == 1.0
    assert hausdorff_linf([[0.0]], [[0.3], [-0.5]]) == 0.5
    assert hausdorff_linf([[0.0, 2.0]], [[0.5, 1.0]]) == 1.0


def test_hausdorff_guards():
    with pytest.raises(ValueError):
        hausdorff_linf(np.zeros((0, 2)), np.zeros((1, 2)))
    with pytest.raises(ValueError):
        hausdorff_linf(np.zeros((1, 2)), np.zeros((1, 3)))


@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 10_000))
def test_hausdorff_is_symmetric_and_bounded_by_triangle(na, nb, seed):
    rng = np.random.default_rng(seed)
    a, b, c = rng.random((na, 3)), rng.random((nb, 3)), rng.random((5, 3))
    assert hausdorff_linf(a, b) == hausdorff_linf(b, a)
    assert hausdorff_linf(a, c) <= hausdorff_linf(a, b) + hausdorff_linf(b, c) + 1e-12


def test_linf_matrix_chunking_matches_direct():
    rng = np.random.default_rng(0)
    a, b = rng.random((300, 40)), rng.random((250, 40))
    direct = np.abs(a[:, None, :] - b[None, :, :]).max(axis=2)
    assert np.array_equal(linf_distance_matrix(a, b), direct)


# -- exact Gromov-Hausdorff -----------------------------------------------


def test_gh_point_versus_space_is_half_diameter():
    tri = space([[0, 1, 1], [1, 0, 1], [1, 1, 0]])
    assert gh_exact(space([[0]]), tri) == 0.5


def test_gh_two_point_spaces():
    assert gh_exact(space([[0, 1], [1, 0]]), space([[0, 3], [3, 0]])) == 1.0


def test_gh_isometric_copies():
    x = random_metric_space(np.random.default_rng(1), 5)
    perm = [3, 0, 4, 1, 2]
    y = space(x.dist[np.ix_(perm, perm)])
    assert gh_exact(x, y) == 0.0


def test_gh_exact_caps_size():
    big = random_metric_space(np.random.default_rng(2), 7)
    with pytest.raises(ValueError):
        gh_exact(big, big)


@pytest.mark.parametrize("seed", range(12))
def test_gh_exact_matches_all_relations(seed):
    rng = np.random.default_rng(seed)
    x = random_metric_space(rng, int(rng.integers(1, 4)))
    y = random_metric_space(rng, int(rng.integers(1, 4)))
    assert gh_exact(x, y) == pytest.approx(gh_all_relations(x, y), abs=1e-12)


@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 10_000))
def test_gh_exact_properties(nx, ny, seed):
    rng = np.random.default_rng(seed)
    x, y = random_metric_space(rng, nx), random_metric_space(rng, ny)
    d = gh_exact(x, y)
    assert d == pytest.approx(gh_exact(y, x), abs=1e-12)
    assert gh_exact(x, x) == 0.0
    assert d <= 0.5 * max(x.diameter, y.diameter) + 1e-12
    assert d >= 0.5 * abs(x.diameter - y.diameter) - 1e-12


# -- bracket --------------------------------------------------------------


def test_bracket_contains_exact_on_random_small_spaces():
    rng = np.random.default_rng(50)
    for _ in range(50):
        x = random_metric_space(rng, int(rng.integers(1, 7)))
        y = random_metric_space(rng, int(rng.integers(1, 7)))
        lo, hi = gh_bound(x, y, seed=3)
        exact = gh_exact(x, y)
        assert lo - 1e-12 <= exact <= hi + 1e-12


def test_bracket_with_exact_small_is_tight():
    rng = np.random.default_rng(4)
    x, y = random_metric_space(rng, 4), random_metric_space(rng, 5)
    lo, hi = gh_bound(x, y, exact_small=True)
    assert hi == gh_exact(x, y) and lo <= hi


def test_upper_bound_capped_by_shared_embedding():
    rng = np.random.default_rng(6)
    a = FiniteMetricSpace.from_vectors(rng.random((30, 4)))
    b = FiniteMetricSpace.from_vectors(a.points + rng.uniform(-0.01, 0.01, a.points.shape))
    lo, hi = gh_bound(a, b)
    assert hi <= 0.01 + 1e-12
    assert lo <= hi


def test_lower_bound_examples():
    assert gh_lower_bound(space([[0, 1], [1, 0]]), space([[0, 3], [3, 0]])) == 1.0
    assert gh_lower_bound(space([[0]]), space([[0]])) == 0.0


def test_upper_bound_is_seeded():
    rng = np.random.default_rng(7)
    x, y = random_metric_space(rng, 20), random_metric_space(rng, 25)
    assert gh_upper_bound(x, y, seed=1) == gh_upper_bound(x, y, seed=1)


# -- evaluation and serialisation -----------------------------------------


def test_evaluate_run_on_empty_reconstruction():
    truth = FiniteMetricSpace.from_vectors(np.array([[0.0, 1.0]]))
    rep = evaluate_run(np.zeros((0, 0)), truth, eta=0.2, delta=0.0, J=8)
    assert rep["status"] == "failure" and rep["hausdorff"] is None and rep["n_points"] == 0


def test_evaluate_run_report():
    truth = FiniteMetricSpace.from_vectors(np.array([[0.0, 1.0], [1.0, 0.0]]))
    rep = evaluate_run(np.array([[0.1, 1.0], [1.0, 0.2]]), truth, eta=0.2, delta=0.0, J=8)
    assert rep["status"] == "ok"
    assert rep["hausdorff"] == pytest.approx(0.2)
    assert rep["gh_lower"] <= rep["gh_upper"] <= rep["hausdorff"] + 1e-12
    skipped = evaluate_run(np.array([[0.1, 1.0]]), truth, eta=0.2, delta=0.0, J=8, gh_max_points=1)
    assert skipped["gh_skipped"] and skipped["gh_upper"] is None


def test_evaluate_run_needs_truth_vectors():
    with pytest.raises(ValueError):
        evaluate_run(np.ones((1, 1)), space([[0]]), eta=0.1, delta=0, J=1)


def test_json_roundtrip_linf_and_matrix():
    rng = np.random.default_rng(8)
    a = FiniteMetricSpace.from_vectors(rng.random((6, 3)))
    b = FiniteMetricSpace.from_json(json.loads(dumps(a.to_json())))
    assert b.labels == a.labels and np.array_equal(b.points, a.points) and np.array_equal(b.dist, a.dist)
    m = random_metric_space(rng, 4)
    m2 = FiniteMetricSpace.from_json(json.loads(dumps(m.to_json())))
    assert np.array_equal(m2.dist, m.dist) and m2.points is None


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        FiniteMetricSpace(("a",), np.zeros((2, 2)))
