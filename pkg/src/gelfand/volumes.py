"""Approximate volumes of domains of influence and of the slices built from them.

vol^a(M_alpha) is obtained by projecting the constant eigenfunction onto the
set of vectors with small boundary waves near the cells selected by alpha;
what remains after the projection is concentrated in M_alpha, and its squared
norm times |phi_1|^-2 approximates the volume. Intersections and differences
of domains of influence are reduced to unions through inclusion-exclusion,
and unions of domains of influence are again domains of influence.
"""

from __future__ import annotations

import itertools
import math
import threading
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

from .projection import (ConstraintThresholds, SolverConfig, build_thresholds, project_onto_U)
from .spectral import boundary_grams, default_dt, time_kernels

if TYPE_CHECKING:
    from .models import BoundaryPartition, SpectralDataset

KEY_GRID = 16  # cache keys live on an eta/16 grid


@dataclass(frozen=True)
class VolumeParams:
    """Inputs of the projection step shared by every volume query."""

    J: int
    Lambda: float = 1.0
    gamma: float = 0.5
    eps1: float = 0.03
    C0: float = 1.0
    C0p: float = 1.0
    eta: float = 0.2
    diameter: float = math.pi

    @classmethod
    def from_dict(cls, obj: dict) -> "VolumeParams":
        return cls(**obj)


@dataclass
class VolumeRecord:
    alpha: tuple[float, ...]
    value: float
    raw: float
    iterations: int
    converged: bool


@dataclass
class VolumeCache:
    """Computed vol^a values by canonical key, plus diagnostic counters."""

    records: dict[tuple[int, ...], VolumeRecord] = field(default_factory=dict)
    clamped_volumes: int = 0
    clamped_slices: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __len__(self) -> int:
        return len(self.records)


def approx_manifold_volume(ds: "SpectralDataset") -> float:
    """|phi_1|_{C^0(boundary)}^{-2}; exact volume for exact data."""
    peak = float(np.max(np.abs(ds.traces[0])))
    if peak == 0.0:
        raise ValueError("the first boundary trace vanishes")
    return 1.0 / peak ** 2


def alpha_key(alpha: Sequence[float], eta: float, diameter: float) -> tuple[int, ...]:
    unit = eta / KEY_GRID
    return tuple(int(round(min(max(a, 0.0), diameter) / unit)) for a in alpha)


def key_to_alpha(key: Sequence[int], eta: float) -> tuple[float, ...]:
    unit = eta / KEY_GRID
    return tuple(k * unit for k in key)


def format_key(key: Sequence[int], eta: float) -> str:
    return ";".join(format(a, ".6g") for a in key_to_alpha(key, eta))


class VolumeOracle:
    """Approximate volumes for one dataset, partition and parameter set.

    Boundary Gram matrices and time kernels are cached per cell and per time
    window, so each volume query only assembles and solves a small QCQP.
    """

    def __init__(self, ds: "SpectralDataset", partition: "BoundaryPartition", params: VolumeParams,
                 solver: SolverConfig = SolverConfig(), cache: VolumeCache | None = None):
        if params.J > ds.J:
            raise ValueError(f"J = {params.J} exceeds the {ds.J} modes in the dataset")
        self.ds = ds
        self.partition = partition
        self.params = params
        self.solver = solver
        self.cache = cache if cache is not None else VolumeCache()
        self.thresholds: ConstraintThresholds = build_thresholds(
            params.J, params.Lambda, params.gamma, params.eps1, ds.delta, ds, params.C0, params.C0p)
        self.prefactor = approx_manifold_volume(ds)
        self.dt = default_dt(ds, params.J)
        self._grams: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self._kernels: dict[float, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
        self._lock = threading.Lock()
        self.u = np.zeros(params.J)
        self.u[0] = 1.0

    # -- cached building blocks --------------------------------------------

    def _gram(self, k: int):
        with self._lock:
            hit = self._grams.get(k)
        if hit is None:
            hit = boundary_grams(self.ds, self.partition.subset(k), self.params.J)
            with self._lock:
                self._grams.setdefault(k, hit)
        return hit

    def _kernel(self, a: float):
        with self._lock:
            hit = self._kernels.get(a)
        if hit is None:
            hit = time_kernels(self.ds.lambdas[: self.params.J], a, self.dt)
            with self._lock:
                self._kernels.setdefault(a, hit)
        return hit

    # -- volumes -----------------------------------------------------------

    def key(self, alpha: Sequence[float]) -> tuple[int, ...]:
        if len(alpha) != self.partition.N + 1:
            raise ValueError(f"alpha must have {self.partition.N + 1} entries")
        return alpha_key(alpha, self.params.eta, self.params.diameter)

    def _compute(self, key: tuple[int, ...]) -> VolumeRecord:
        alpha = key_to_alpha(key, self.params.eta)
        if not any(key):
            return VolumeRecord(alpha, 0.0, 0.0, 0, True)
        # the radial margin already absorbs quadrature rounding, so skip re-verification
        res = project_onto_U(self.u, self.thresholds, self.ds, self.partition, alpha, self.solver,
                             grams=self._gram, kernels=self._kernel, verify=False)
        b = self.u - res.coeffs
        raw = self.prefactor * float(b @ b)
        value = min(max(raw, 0.0), self.prefactor)
        return VolumeRecord(alpha, value, raw, res.iterations, res.converged)

    def record(self, alpha: Sequence[float]) -> VolumeRecord:
        key = self.key(alpha)
        with self.cache.lock:
            hit = self.cache.records.get(key)
        if hit is not None:
            return hit
        rec = self._compute(key)
        with self.cache.lock:
            if key not in self.cache.records:
                if rec.value != rec.raw:
                    self.cache.clamped_volumes += 1
                self.cache.records[key] = rec
            return self.cache.records[key]

    def vol_a(self, alpha: Sequence[float]) -> float:
        return self.record(alpha).value

    def vol_union(self, *alphas: Sequence[float]) -> float:
        return self.vol_a(union_index(*alphas))

    def prefetch(self, alphas: Iterable[Sequence[float]], threads: int = 1) -> None:
        """Evaluate many indices, in sorted key order, optionally on a thread pool."""
        keys = sorted({self.key(a) for a in alphas} - set(self.cache.records))
        if threads <= 1 or len(keys) < 2:
            for k in keys:
                self.record(key_to_alpha(k, self.params.eta))
            return
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            recs = list(pool.map(lambda k: (k, self._compute(k)), keys))
        with self.cache.lock:
            for k, rec in recs:
                if k not in self.cache.records:
                    if rec.value != rec.raw:
                        self.cache.clamped_volumes += 1
                    self.cache.records[k] = rec

    # -- slices ------------------------------------------------------------

    def _clamp_slice(self, value: float) -> float:
        if value < 0:
            with self.cache.lock:
                self.cache.clamped_slices += 1
            return 0.0
        return value

    def slice_inner_terms(self, beta: Sequence[int], L: int | None = None) -> list[tuple[int, tuple[float, ...]]]:
        return slice_inner_terms(beta, self.params.eta, L)

    def vol_slice_inner(self, beta: Sequence[int], L: int | None = None) -> float:
        total = sum(sign * self.vol_a(alpha) for sign, alpha in self.slice_inner_terms(beta, L))
        return self._clamp_slice(total)

    def vol_slice_boundary(self, N: int, k: int, beta_k: int, i: int, beta_i: int) -> float:
        terms = slice_boundary_terms(N, k, beta_k, i, beta_i, self.params.eta)
        return self._clamp_slice(sum(sign * self.vol_a(alpha) for sign, alpha in terms))


def union_index(*alphas: Sequence[float]) -> tuple[float, ...]:
    """Componentwise maximum: the index of the union of domains of influence."""
    if not alphas:
        raise ValueError("need at least one index")
    size = len(alphas[0])
    if any(len(a) != size for a in alphas):
        raise ValueError("indices differ in length")
    return tuple(max(vals) for vals in zip(*alphas))


def _radius(count: int, eta: float) -> float:
    return max(count * eta, 0.0)


def slice_inner_terms(beta: Sequence[int], eta: float, L: int | None = None) -> list[tuple[int, tuple[float, ...]]]:
    """Signed vol^a terms whose sum is the volume of an interior slice.

    The slice is the intersection over active i of {d(x, Gamma_i) < beta_i eta}
    minus the union Y of {d(x, Gamma_i) < (beta_i - 2) eta}. Writing S_i for
    the first sets, vol(cap S_i - Y) = sum over nonempty K of
    (-1)^{|K|+1} vol(cup_K S_i cup Y) - vol(Y).
    """
    if beta[0] != 0:
        raise ValueError("interior slices need beta_0 = 0")
    active = [i for i in range(1, len(beta)) if beta[i] > 0]
    if not active:
        raise ValueError("interior slice needs a nonzero component")
    if L is not None and len(active) > L + 1:
        raise ValueError(f"{len(active)} nonzero components exceed the L + 1 = {L + 1} allowed")
    size = len(beta)
    inner = [0.0] * size
    for i in active:
        inner[i] = _radius(beta[i] - 2, eta)
    y = tuple(inner)
    terms: list[tuple[int, tuple[float, ...]]] = []
    for r in range(1, len(active) + 1):
        for subset in itertools.combinations(active, r):
            alpha = list(y)
            for i in subset:
                alpha[i] = max(alpha[i], _radius(beta[i], eta))
            terms.append(((-1) ** (r + 1), tuple(alpha)))
    terms.append((-1, y))
    return terms


def slice_boundary_terms(N: int, k: int, beta_k: int, i: int, beta_i: int,
                         eta: float) -> list[tuple[int, tuple[float, ...]]]:
    """Four signed vol^a terms for the boundary-layer slice of the pair (k, i).

    With A = {d(Gamma_k) < beta_k eta}, B = {d(Gamma_i) < beta_i eta} and
    Y = {d(boundary) < (beta_k - 2) eta} cup {d(Gamma_i) < (beta_i - 2) eta}:
    vol(A cap B - Y) = vol(A cup Y) + vol(B cup Y) - vol(A cup B cup Y) - vol(Y).
    """
    if k == i:
        raise ValueError("boundary slices need two distinct cells")
    if not (1 <= k <= N and 1 <= i <= N):
        raise ValueError("cell index out of range")
    y = [0.0] * (N + 1)
    y[0] = _radius(beta_k - 2, eta)
    y[i] = _radius(beta_i - 2, eta)
    a_y = list(y)
    a_y[k] = max(a_y[k], _radius(beta_k, eta))
    b_y = list(y)
    b_y[i] = max(b_y[i], _radius(beta_i, eta))
    ab_y = list(a_y)
    ab_y[i] = b_y[i]
    return [(1, tuple(a_y)), (1, tuple(b_y)), (-1, tuple(ab_y)), (-1, tuple(y))]


# module-level conveniences mirroring the oracle methods


def vol_a(ds, partition, alpha, params: VolumeParams, cache: VolumeCache | None = None,
          solver: SolverConfig = SolverConfig()) -> float:
    return VolumeOracle(ds, partition, params, solver, cache).vol_a(alpha)


def vol_union(ds, partition, *alphas, params: VolumeParams, cache: VolumeCache | None = None) -> float:
    return VolumeOracle(ds, partition, params, cache=cache).vol_union(*alphas)
