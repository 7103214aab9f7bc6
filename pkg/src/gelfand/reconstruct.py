"""Assembly of candidate boundary distance functions from slice volumes.

A multi-index beta = (beta_0; beta_1..beta_N) encodes the piecewise constant
function r_beta = beta_i * eta on cell i. It is accepted when the slices it
names carry volume at least eps. Two routes exist:

* interior (beta_0 = 0): every beta_i eta exceeds i0/2 and, for each l beyond
  the L coordinate cells, the slice built from cells 1..L and l is heavy;
* boundary (beta_0 = 1): k is the first index of the smallest entry, beta_k
  eta <= i0/2, and the slice built from (k, i) is heavy for every i != k.

Both tests factor over cells, so the accepted set is a union of boxes and is
assembled from per-cell lists instead of by testing every beta.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator, Mapping, Sequence

import numpy as np

from .metric import FiniteMetricSpace, linf_distance_matrix
from .volumes import VolumeOracle, slice_boundary_terms, slice_inner_terms


class ReconstructionTooLarge(RuntimeError):
    """The accepted set would exceed the configured point budget."""


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


@dataclass(frozen=True)
class ReconstructionParams:
    eta: float
    i0: float
    L: int
    D: float
    n: int = 1
    eps: float | None = None
    max_points: int = 200_000

    def __post_init__(self) -> None:
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if self.L < 0:
            raise ValueError("L must be nonnegative")
        if self.threshold <= 0:
            raise ValueError("acceptance threshold must be positive")

    @property
    def threshold(self) -> float:
        """Acceptance volume; defaults to half the volume of an eta-ball."""
        if self.eps is not None:
            return float(self.eps)
        return unit_ball_volume(self.n) * self.eta ** self.n / 2

    @property
    def beta_max(self) -> int:
        return int(math.floor(2 + self.D / self.eta + 1e-9))

    @property
    def boundary_beta_max(self) -> int:
        """Largest beta_k eligible for the boundary route (beta_k eta <= i0/2)."""
        return min(self.beta_max, int(math.floor(self.i0 / (2 * self.eta) + 1e-9)))

    @property
    def interior_beta_min(self) -> int:
        """Smallest beta_i allowed on the interior route (beta_i eta > i0/2)."""
        return int(math.floor(self.i0 / (2 * self.eta) + 1e-9)) + 1

    def satisfies_scale_condition(self) -> bool:
        return self.eta < min(1.0, self.i0 / 8)


@dataclass(frozen=True)
class BoundaryDistanceFn:
    beta: tuple[int, ...]
    values: tuple[float, ...]
    route: str

    def to_json(self) -> dict:
        return {"beta": list(self.beta), "values": list(self.values), "route": self.route}


# slice report keys
def inner_key(beta: Sequence[int]) -> tuple:
    return ("inner", tuple(int(b) for b in beta))


def boundary_key(k: int, beta_k: int, i: int, beta_i: int) -> tuple:
    return ("boundary", k, beta_k, i, beta_i)


def _inner_beta(N: int, coords: Sequence[int], l: int, beta_l: int) -> tuple[int, ...]:
    beta = [0] * (N + 1)
    for i, b in enumerate(coords, start=1):
        beta[i] = b
    beta[l] = beta_l
    return tuple(beta)


def enumerate_betas(params: ReconstructionParams, N: int) -> Iterator[tuple]:
    """Stream of slice queries needed by the acceptance tests.

    Items are ``("inner", beta)`` for interior-route slices and
    ``("boundary", k, beta_k, i, beta_i)`` for boundary-route slices. The
    boundary route only pairs k with entries that keep k the first minimum.
    """
    L = min(params.L, N)
    lo, hi = params.interior_beta_min, params.beta_max
    if lo <= hi and L < N:
        for coords in itertools.product(range(lo, hi + 1), repeat=L):
            for l in range(L + 1, N + 1):
                for b in range(lo, hi + 1):
                    yield inner_key(_inner_beta(N, coords, l, b))
    for k in range(1, N + 1):
        for bk in range(1, params.boundary_beta_max + 1):
            for i in range(1, N + 1):
                if i == k:
                    continue
                first = bk + 1 if i < k else bk
                for bi in range(first, hi + 1):
                    yield boundary_key(k, bk, i, bi)


def accept_beta(beta: Sequence[int], vol_reports: Mapping[tuple, float],
                params: ReconstructionParams) -> bool:
    """Acceptance test for a full multi-index given precomputed slice volumes."""
    eps = params.threshold
    eta = params.eta
    N = len(beta) - 1
    b = [int(x) for x in beta]
    if b[0] == 0:
        if min(b[1:]) * eta <= params.i0 / 2:
            return False
        L = min(params.L, N)
        for l in range(L + 1, N + 1):
            key = inner_key(_inner_beta(N, b[1:L + 1], l, b[l]))
            if key not in vol_reports:
                raise KeyError(f"missing volume report for {key}")
            if vol_reports[key] < eps:
                return False
        return True
    if b[0] != 1:
        raise ValueError("beta_0 must be 0 or 1")
    k = 1 + int(np.argmin(b[1:]))
    if b[k] * eta > params.i0 / 2:
        return False
    for i in range(1, N + 1):
        if i == k:
            continue
        key = boundary_key(k, b[k], i, b[i])
        if key not in vol_reports:
            raise KeyError(f"missing volume report for {key}")
        if vol_reports[key] < eps:
            return False
    return True


@dataclass
class RStar:
    functions: list[BoundaryDistanceFn]
    slice_volumes: dict[tuple, float]
    eta: float

    @property
    def values(self) -> np.ndarray:
        if not self.functions:
            return np.zeros((0, 0))
        return np.array([f.values for f in self.functions])

    def __len__(self) -> int:
        return len(self.functions)

    def to_json(self) -> list:
        return [f.to_json() for f in self.functions]


def slice_alphas(query: tuple, N: int, eta: float, L: int) -> list[tuple[float, ...]]:
    if query[0] == "inner":
        return [a for _, a in slice_inner_terms(query[1], eta, L)]
    _, k, bk, i, bi = query
    return [a for _, a in slice_boundary_terms(N, k, bk, i, bi, eta)]


def compute_slice_volumes(oracle: VolumeOracle, params: ReconstructionParams, N: int,
                          threads: int = 1) -> dict[tuple, float]:
    queries = list(enumerate_betas(params, N))
    L = min(params.L, N)
    oracle.prefetch((a for q in queries for a in slice_alphas(q, N, params.eta, L)), threads=threads)
    reports: dict[tuple, float] = {}
    for q in queries:
        if q[0] == "inner":
            reports[q] = oracle.vol_slice_inner(q[1], L)
        else:
            reports[q] = oracle.vol_slice_boundary(N, *q[1:])
    return reports


def assemble_rstar(reports: Mapping[tuple, float], params: ReconstructionParams, N: int) -> RStar:
    """Accepted multi-indices, deduplicated by value vector and sorted."""
    eps = params.threshold
    eta = params.eta
    L = min(params.L, N)
    accepted: dict[tuple[int, ...], BoundaryDistanceFn] = {}
    budget = params.max_points

    def add(beta: tuple[int, ...], route: str) -> None:
        values = tuple(b * eta for b in beta[1:])
        key = tuple(int(round(v / (eta / 1024))) for v in values)
        if key not in accepted:
            if len(accepted) >= budget:
                raise ReconstructionTooLarge(f"more than {budget} accepted functions")
            accepted[key] = BoundaryDistanceFn(tuple(beta), values, route)

    lo, hi = params.interior_beta_min, params.beta_max
    if lo <= hi and L < N:
        for coords in itertools.product(range(lo, hi + 1), repeat=L):
            options = []
            for l in range(L + 1, N + 1):
                opts = [b for b in range(lo, hi + 1)
                        if reports[inner_key(_inner_beta(N, coords, l, b))] >= eps]
                options.append(opts)
            for tail in itertools.product(*options):
                add((0, *coords, *tail), "interior")
    if L == N and lo <= hi:
        # no free cells: the coordinate block alone is the candidate
        for coords in itertools.product(range(lo, hi + 1), repeat=L):
            add((0, *coords), "interior")

    for k in range(1, N + 1):
        for bk in range(1, params.boundary_beta_max + 1):
            options = []
            for i in range(1, N + 1):
                if i == k:
                    options.append([bk])
                    continue
                first = bk + 1 if i < k else bk
                options.append([b for b in range(first, hi + 1)
                                if reports[boundary_key(k, bk, i, b)] >= eps])
            for beta in itertools.product(*options):
                add((1, *beta), "boundary")

    functions = sorted(accepted.values(), key=lambda f: (f.values, f.route, f.beta))
    return RStar(functions, dict(reports), eta)


def build_rstar(oracle: VolumeOracle, params: ReconstructionParams, threads: int = 1) -> RStar:
    """Accepted boundary distance functions for the oracle's data."""
    N = oracle.partition.N
    reports = compute_slice_volumes(oracle, params, N, threads=threads)
    return assemble_rstar(reports, params, N)


def rstar_labels(rstar: RStar) -> tuple[str, ...]:
    return tuple("b:" + ",".join(str(b) for b in f.beta) for f in rstar.functions)


def rstar_to_metric_space(rstar: RStar) -> FiniteMetricSpace:
    if len(rstar) == 0:
        raise ValueError("cannot build a metric space from an empty reconstruction")
    vals = rstar.values
    return FiniteMetricSpace(rstar_labels(rstar), linf_distance_matrix(vals, vals), vals)
