"""Hausdorff and Gromov-Hausdorff distances between finite point sets."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

GH_EXACT_MAX_POINTS = 6


@dataclass(frozen=True, eq=False)
class FiniteMetricSpace:
    """Labelled points with a symmetric distance matrix.

    ``points`` optionally keeps the coordinate vectors the distances were
    computed from (value vectors in the L-infinity ambient space).
    """

    labels: tuple[str, ...]
    dist: np.ndarray
    points: np.ndarray | None = field(default=None)

    def __post_init__(self) -> None:
        d = np.asarray(self.dist, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1] or d.shape[0] != len(self.labels):
            raise ValueError("distance matrix shape does not match labels")
        object.__setattr__(self, "dist", d)

    @property
    def size(self) -> int:
        return len(self.labels)

    @property
    def diameter(self) -> float:
        return float(self.dist.max()) if self.size else 0.0

    @classmethod
    def from_vectors(cls, vectors: np.ndarray, labels: Sequence[str] | None = None) -> "FiniteMetricSpace":
        vecs = np.atleast_2d(np.asarray(vectors, dtype=float))
        if labels is None:
            labels = [f"p{i}" for i in range(len(vecs))]
        return cls(tuple(labels), linf_distance_matrix(vecs, vecs), vecs)

    def to_json(self) -> dict:
        """Value vectors when known (distances are their L-infinity gaps), else the matrix."""
        if self.points is not None:
            return linf_space_json(self.labels, self.points)
        return {"labels": list(self.labels), "metric": "matrix", "dist": self.dist}

    @classmethod
    def from_json(cls, obj: dict) -> "FiniteMetricSpace":
        labels = tuple(obj["labels"])
        if obj.get("metric") == "linf":
            pts = np.asarray(obj["points"], dtype=float).reshape(len(labels), -1)
            return cls(labels, linf_distance_matrix(pts, pts), pts)
        return cls(labels, np.asarray(obj["dist"], dtype=float).reshape(len(labels), len(labels)))


def linf_space_json(labels: Sequence[str], points: np.ndarray) -> dict:
    """JSON form of a point set under the max-norm, without materialising distances."""
    pts = np.asarray(points, dtype=float)
    return {"labels": list(labels), "metric": "linf", "points": pts}


def linf_distance_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    out = np.empty((len(a), len(b)))
    # chunk rows to bound the temporary (rows x cols x dim) array
    chunk = max(1, 2_000_000 // max(1, len(b) * a.shape[1]))
    for start in range(0, len(a), chunk):
        block = a[start:start + chunk, None, :] - b[None, :, :]
        out[start:start + chunk] = np.abs(block).max(axis=2)
    return out


def hausdorff_linf(a: np.ndarray, b: np.ndarray) -> float:
    """Exact Hausdorff distance between two finite sets of vectors under the max-norm."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise ValueError("Hausdorff distance of an empty set is undefined")
    if a.shape[1] != b.shape[1]:
        raise ValueError("vector lengths differ")
    d = linf_distance_matrix(a, b)
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def correspondence_distortion(dx: np.ndarray, dy: np.ndarray, pairs: Sequence[tuple[int, int]]) -> float:
    """max |d_X(x, x') - d_Y(y, y')| over related pairs."""
    if not pairs:
        return 0.0
    xs = np.array([p[0] for p in pairs])
    ys = np.array([p[1] for p in pairs])
    return float(np.abs(dx[np.ix_(xs, xs)] - dy[np.ix_(ys, ys)]).max())


def _check_small(x: FiniteMetricSpace, y: FiniteMetricSpace) -> None:
    if x.size > GH_EXACT_MAX_POINTS or y.size > GH_EXACT_MAX_POINTS:
        raise ValueError(f"exact Gromov-Hausdorff search is capped at {GH_EXACT_MAX_POINTS} points per space")
    if x.size == 0 or y.size == 0:
        raise ValueError("empty metric space")


def gh_exact(x: FiniteMetricSpace, y: FiniteMetricSpace) -> float:
    """Exact Gromov-Hausdorff distance by exhaustive correspondence search.

    An optimal correspondence can always be taken to be the graph of a map
    f: X -> Y together with, for every y outside f(X), a single partner g(y).
    Adding more pairs never lowers distortion, so searching over (f, g)
    covers all minimal correspondences. Partial distortion is used to prune.
    """
    _check_small(x, y)
    dx, dy = x.dist, y.dist
    nx, ny = x.size, y.size
    best = [np.inf]

    def extend(pairs: list[tuple[int, int]], cur: float, new: tuple[int, int]) -> float:
        i, j = new
        worst = cur
        for p, q in pairs:
            worst = max(worst, abs(dx[i, p] - dy[j, q]))
        return worst

    def assign_y(pairs: list[tuple[int, int]], cur: float, missing: list[int], pos: int) -> None:
        if cur >= best[0]:
            return
        if pos == len(missing):
            best[0] = cur
            return
        j = missing[pos]
        for i in range(nx):
            val = extend(pairs, cur, (i, j))
            if val < best[0]:
                pairs.append((i, j))
                assign_y(pairs, val, missing, pos + 1)
                pairs.pop()

    def assign_x(pairs: list[tuple[int, int]], cur: float, i: int) -> None:
        if cur >= best[0]:
            return
        if i == nx:
            covered = {q for _, q in pairs}
            assign_y(pairs, cur, [j for j in range(ny) if j not in covered], 0)
            return
        for j in range(ny):
            val = extend(pairs, cur, (i, j))
            if val < best[0]:
                pairs.append((i, j))
                assign_x(pairs, val, i + 1)
                pairs.pop()

    assign_x([], 0.0, 0)
    return 0.5 * float(best[0])


def _eccentricity_bound(dx: np.ndarray, dy: np.ndarray) -> float:
    # related points have eccentricities within the distortion of each other
    ex = np.sort(dx.max(axis=1))
    ey = np.sort(dy.max(axis=1))
    gap = np.abs(ex[:, None] - ey[None, :])
    return 0.5 * float(max(gap.min(axis=1).max(), gap.min(axis=0).max()))


def gh_lower_bound(x: FiniteMetricSpace, y: FiniteMetricSpace) -> float:
    diam = 0.5 * abs(x.diameter - y.diameter)
    return max(diam, _eccentricity_bound(x.dist, y.dist))


def _greedy_map(src: np.ndarray, dst: np.ndarray, order: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Assign each source point a target, greedily keeping distortion low."""
    m = np.full(len(src), -1)
    placed: list[int] = []
    for step, i in enumerate(order):
        if step == 0:
            m[i] = int(rng.integers(len(dst)))
        else:
            p = np.array(placed)
            cost = np.abs(src[i, p][None, :] - dst[:, m[p]]).max(axis=1)
            m[i] = int(np.argmin(cost))
        placed.append(int(i))
    return m


def _bottleneck_descent(dx: np.ndarray, dy: np.ndarray, xs: np.ndarray, ys: np.ndarray,
                        n_fixed_x: int, max_moves: int) -> float:
    """Repeatedly re-pair an endpoint of the worst pair while that lowers the distortion.

    Pairs with index < n_fixed_x keep their X point and may move their Y
    partner; the remaining pairs keep their Y point.
    """
    err = np.abs(dx[np.ix_(xs, xs)] - dy[np.ix_(ys, ys)])
    cur = float(err.max())
    for _ in range(max_moves):
        if cur == 0.0:
            break
        p, q = np.unravel_index(int(np.argmax(err)), err.shape)
        improved = False
        for r in (int(p), int(q)):
            keep = np.ones(len(xs), dtype=bool)
            keep[r] = False
            rest = float(err[np.ix_(keep, keep)].max()) if keep.any() else 0.0
            if rest >= cur:
                continue
            if r < n_fixed_x:
                rows = np.abs(dx[xs[r], xs][None, :] - dy[:, ys])
            else:
                rows = np.abs(dx[:, xs] - dy[ys[r], ys][None, :])
            rows[:, r] = 0.0
            cand = int(np.argmin(rows.max(axis=1)))
            new_max = max(float(rows[cand].max()), rest)
            if new_max < cur:
                if r < n_fixed_x:
                    ys[r] = cand
                else:
                    xs[r] = cand
                err[r, :] = rows[cand]
                err[:, r] = rows[cand]
                cur = float(err.max())
                improved = True
                break
        if not improved:
            break
    return cur


def gh_upper_bound(x: FiniteMetricSpace, y: FiniteMetricSpace, seed: int = 0,
                   restarts: int = 8, sweeps: int = 4) -> float:
    """Half the distortion of the best correspondence found by randomized greedy plus local search."""
    if x.size == 0 or y.size == 0:
        raise ValueError("empty metric space")
    dx, dy = x.dist, y.dist
    rng = np.random.default_rng(seed)
    best = np.inf
    for _ in range(restarts):
        f = _greedy_map(dx, dy, rng.permutation(x.size), rng)
        g = _greedy_map(dy, dx, rng.permutation(y.size), rng)
        # correspondence = graph(f) plus graph(g) transposed
        xs = np.concatenate([np.arange(x.size), g])
        ys = np.concatenate([f, np.arange(y.size)])
        cur = _bottleneck_descent(dx, dy, xs, ys, x.size, sweeps * (x.size + y.size))
        best = min(best, cur)
    return 0.5 * best


def gh_bound(x: FiniteMetricSpace, y: FiniteMetricSpace, seed: int = 0,
             restarts: int = 8, sweeps: int = 4, exact_small: bool = False) -> tuple[float, float]:
    """(lower, upper) bracket on the Gromov-Hausdorff distance.

    With ``exact_small`` the exhaustive search replaces the heuristic when
    both spaces are small enough for it.
    """
    lower = gh_lower_bound(x, y)
    if exact_small and x.size <= GH_EXACT_MAX_POINTS and y.size <= GH_EXACT_MAX_POINTS:
        exact = gh_exact(x, y)
        return min(lower, exact), exact
    upper = gh_upper_bound(x, y, seed=seed, restarts=restarts, sweeps=sweeps)
    if x.points is not None and y.points is not None and x.points.shape[1] == y.points.shape[1]:
        # both live isometrically in the same L-infinity space
        upper = min(upper, hausdorff_linf(x.points, y.points))
    return lower, max(lower, upper)


def evaluate_run(rstar_values: np.ndarray, ground_truth: FiniteMetricSpace, *, eta: float,
                 delta: float, J: int, seed: int = 0, restarts: int = 8, sweeps: int = 4,
                 gh_max_points: int | None = None) -> dict:
    """Score a reconstruction against sampled boundary distance functions.

    Returns the report dictionary; an empty reconstruction yields a failure
    record instead of raising. The Gromov-Hausdorff bracket is skipped (left
    as None) when either space has more than ``gh_max_points`` points.
    """
    values = np.asarray(rstar_values, dtype=float)
    base = {"eta": float(eta), "delta": float(delta), "J": int(J)}
    if values.size == 0:
        return {"status": "failure", "reason": "empty reconstruction", "hausdorff": None,
                "gh_lower": None, "gh_upper": None, "n_points": 0,
                "n_truth": ground_truth.size, **base}
    if ground_truth.points is None:
        raise ValueError("ground truth must carry its value vectors")
    haus = hausdorff_linf(values, ground_truth.points)
    lower = upper = None
    too_big = gh_max_points is not None and max(len(values), ground_truth.size) > gh_max_points
    if not too_big:
        recon = FiniteMetricSpace.from_vectors(values)
        lower, upper = gh_bound(recon, ground_truth, seed=seed, restarts=restarts, sweeps=sweeps)
    return {"status": "ok", "hausdorff": haus, "gh_lower": lower, "gh_upper": upper,
            "gh_skipped": bool(too_big), "n_points": int(len(values)),
            "n_truth": ground_truth.size, **base}


def random_metric_space(rng: np.random.Generator, size: int, dim: int = 2) -> FiniteMetricSpace:
    """Random Euclidean point cloud, useful for regression corpora."""
    pts = rng.random((size, dim))
    d = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2))
    return FiniteMetricSpace(tuple(f"q{i}" for i in range(size)), d)


__all__ = [
    "FiniteMetricSpace", "hausdorff_linf", "gh_exact", "gh_bound", "gh_lower_bound",
    "gh_upper_bound", "evaluate_run", "linf_distance_matrix", "correspondence_distortion",
    "random_metric_space",
]
