"""Analytic Neumann model manifolds and their boundary spectral data.

Three flat models are supported: an interval, a rectangle and a disk. Each
builder returns the geometry (with interior and boundary quadrature meshes)
together with the exact boundary spectral data of its first ``J`` Neumann
eigenpairs. Perturbed data, boundary partitions and ground-truth oracles for
volumes and boundary distance functions live here as well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import special

from .metric import FiniteMetricSpace, linf_distance_matrix

PERTURBATION_ORDER = 8
SCAN_STEP = 0.1
# fraction of delta used by the injected perturbation; keeps a strict inequality
PERTURBATION_FILL = 0.99


class RootFindingError(RuntimeError):
    """A Bessel-derivative root could not be bracketed or refined."""


# ---------------------------------------------------------------------------
# data containers


@dataclass(frozen=True, eq=False)
class SpectralDataset:
    """Eigenvalues plus boundary traces of the first J eigenfunctions.

    ``traces[j]`` holds the values of the j-th eigenfunction at the boundary
    nodes; ``d1``/``d2`` hold first and second arclength derivatives along the
    boundary curve (only for two-dimensional models).
    """

    n: int
    boundary_nodes: np.ndarray
    weights: np.ndarray
    lambdas: np.ndarray
    traces: np.ndarray
    d1: np.ndarray | None = None
    d2: np.ndarray | None = None
    delta: float = 0.0
    seed: int | None = None
    arclength: np.ndarray | None = None
    perimeter: float | None = None
    model: dict | None = None

    @property
    def J(self) -> int:
        return len(self.lambdas)

    @property
    def exact(self) -> bool:
        return self.delta == 0.0

    @property
    def n_boundary(self) -> int:
        return len(self.weights)

    def truncated(self, J: int) -> "SpectralDataset":
        if not 1 <= J <= self.J:
            raise ValueError(f"cannot truncate {self.J} modes to {J}")
        return replace(
            self,
            lambdas=self.lambdas[:J],
            traces=self.traces[:J],
            d1=None if self.d1 is None else self.d1[:J],
            d2=None if self.d2 is None else self.d2[:J],
        )

    def to_json(self) -> dict:
        modes = []
        for j in range(self.J):
            modes.append({
                "lambda": float(self.lambdas[j]),
                "trace": self.traces[j],
                "d1": None if self.d1 is None else self.d1[j],
                "d2": None if self.d2 is None else self.d2[j],
            })
        out = {
            "n": self.n,
            "boundary_nodes": self.boundary_nodes,
            "weights": self.weights,
            "modes": modes,
            "provenance": {"delta": float(self.delta), "seed": self.seed},
        }
        if self.arclength is not None:
            out["arclength"] = self.arclength
            out["perimeter"] = float(self.perimeter)
        if self.model is not None:
            out["model"] = self.model
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "SpectralDataset":
        modes = obj["modes"]
        has_d = modes and modes[0].get("d1") is not None
        arc = obj.get("arclength")
        return cls(
            n=int(obj["n"]),
            boundary_nodes=np.asarray(obj["boundary_nodes"], dtype=float),
            weights=np.asarray(obj["weights"], dtype=float),
            lambdas=np.array([m["lambda"] for m in modes], dtype=float),
            traces=np.array([m["trace"] for m in modes], dtype=float),
            d1=np.array([m["d1"] for m in modes], dtype=float) if has_d else None,
            d2=np.array([m["d2"] for m in modes], dtype=float) if has_d else None,
            delta=float(obj["provenance"]["delta"]),
            seed=obj["provenance"].get("seed"),
            arclength=None if arc is None else np.asarray(arc, dtype=float),
            perimeter=None if arc is None else float(obj["perimeter"]),
            model=obj.get("model"),
        )


@dataclass(frozen=True, eq=False)
class BoundaryPartition:
    """Disjoint boundary cells Gamma_1..Gamma_N covering every boundary node.

    Index 0 is reserved for the whole boundary. ``arcs`` gives each cell as an
    arclength span ``(start, end)`` with ``end`` possibly past the perimeter
    (wrap-around); it is ``None`` for the interval, whose cells are points.
    """

    eta: float
    cells: tuple[np.ndarray, ...]
    measures: np.ndarray
    diameters: np.ndarray
    centers: np.ndarray
    arcs: tuple[tuple[float, float], ...] | None = None
    n_boundary: int = 0

    @property
    def N(self) -> int:
        return len(self.cells)

    def subset(self, k: int) -> np.ndarray:
        """Boundary node indices of Gamma_k (k = 0 means the whole boundary)."""
        if k == 0:
            return np.arange(self.n_boundary)
        return self.cells[k - 1]

    def to_json(self) -> dict:
        return {
            "eta": self.eta,
            "cells": [c for c in self.cells],
            "measures": self.measures,
            "diameters": self.diameters,
            "centers": self.centers,
            "arcs": None if self.arcs is None else [list(a) for a in self.arcs],
            "n_boundary": self.n_boundary,
        }


@dataclass(frozen=True, eq=False)
class ModelManifold:
    kind: str
    params: dict
    n: int
    diameter: float
    volume: float
    boundary_measure: float
    interior_nodes: np.ndarray
    interior_weights: np.ndarray
    boundary_nodes: np.ndarray
    boundary_weights: np.ndarray
    arclength: np.ndarray | None
    modes: tuple[tuple, ...]
    metadata: dict = field(default_factory=dict)

    def descriptor(self) -> dict:
        return {"kind": self.kind, **self.params}

    # -- eigenfunctions -----------------------------------------------------

    def eigenfunctions(self, points: np.ndarray, J: int | None = None) -> np.ndarray:
        """Values of the first J eigenfunctions at the given points, shape (m, J)."""
        J = len(self.modes) if J is None else J
        if J > len(self.modes):
            raise ValueError(f"model was built with {len(self.modes)} modes, {J} requested")
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == "interval":
            length = self.params["length"]
            k = np.array([m[0] for m in self.modes[:J]])
            return _cos_factor(pts[:, 0], k, length)
        if self.kind == "rectangle":
            lx, ly = self.params["Lx"], self.params["Ly"]
            kx = np.array([m[0] for m in self.modes[:J]])
            ky = np.array([m[1] for m in self.modes[:J]])
            return _cos_factor(pts[:, 0], kx, lx) * _cos_factor(pts[:, 1], ky, ly)
        radius = self.params["R"]
        r = np.hypot(pts[:, 0], pts[:, 1])
        theta = np.arctan2(pts[:, 1], pts[:, 0])
        out = np.empty((len(pts), J))
        for j, (order, _, parity, root) in enumerate(self.modes[:J]):
            out[:, j] = _disk_norm(order, root, radius) * special.jv(order, root * r / radius) \
                * _angular(order, parity, theta)
        return out

    # -- boundary geometry --------------------------------------------------

    def boundary_point(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.kind == "disk":
            radius = self.params["R"]
            th = s / radius
            return np.stack([radius * np.cos(th), radius * np.sin(th)], axis=-1)
        if self.kind == "rectangle":
            return _rectangle_point(s, self.params["Lx"], self.params["Ly"])
        raise ValueError("the interval boundary has no arclength parametrization")

    def boundary_distance(self, points: np.ndarray) -> np.ndarray:
        """Distance from each point to the whole boundary."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == "interval":
            x = pts[:, 0]
            return np.minimum(x, self.params["length"] - x)
        if self.kind == "rectangle":
            x, y = pts[:, 0], pts[:, 1]
            return np.minimum.reduce([x, self.params["Lx"] - x, y, self.params["Ly"] - y])
        return self.params["R"] - np.hypot(pts[:, 0], pts[:, 1])

    def cell_distances(self, points: np.ndarray, partition: BoundaryPartition) -> np.ndarray:
        """Exact Euclidean distance from each point to each cell, shape (m, N)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == "interval":
            x = pts[:, 0]
            return np.stack([np.abs(x - self.boundary_nodes[c[0], 0]) for c in partition.cells], axis=1)
        cols = [self._arc_distance(pts, a, b) for a, b in partition.arcs]
        return np.stack(cols, axis=1)

    def _arc_distance(self, pts: np.ndarray, start: float, end: float) -> np.ndarray:
        if self.kind == "disk":
            radius = self.params["R"]
            r = np.hypot(pts[:, 0], pts[:, 1])
            phi = np.arctan2(pts[:, 1], pts[:, 0])
            th0, span = start / radius, (end - start) / radius
            inside = np.mod(phi - th0, 2 * np.pi) <= span
            ends = self.boundary_point(np.array([start, end]))
            d_end = np.min(np.linalg.norm(pts[:, None, :] - ends[None, :, :], axis=2), axis=1)
            return np.where(inside, radius - r, d_end)
        verts = self._polyline(start, end)
        best = np.full(len(pts), np.inf)
        for p, q in zip(verts[:-1], verts[1:]):
            best = np.minimum(best, _segment_distance(pts, p, q))
        return best

    def _polyline(self, start: float, end: float) -> np.ndarray:
        lx, ly = self.params["Lx"], self.params["Ly"]
        per = 2 * (lx + ly)
        corners = np.array([0.0, lx, lx + ly, 2 * lx + ly])
        k0 = math.floor(start / per)
        stops = [start]
        for rep in range(k0, k0 + 3):
            for c in corners + rep * per:
                if start < c < end:
                    stops.append(c)
        stops.append(end)
        return self.boundary_point(np.array(sorted(stops)))

    def arc_diameter(self, start: float, end: float) -> float:
        if self.kind == "disk":
            radius = self.params["R"]
            span = (end - start) / radius
            return 2 * radius * math.sin(min(span, math.pi) / 2)
        verts = self._polyline(start, end)
        return float(np.sqrt(((verts[:, None, :] - verts[None, :, :]) ** 2).sum(axis=2)).max())


def _cos_factor(x: np.ndarray, k: np.ndarray, length: float) -> np.ndarray:
    norm = np.where(k == 0, 1.0 / math.sqrt(length), math.sqrt(2.0 / length))
    return norm[None, :] * np.cos(np.outer(x, k * math.pi / length))


def _cos_derivs(x: np.ndarray, k: np.ndarray, length: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    norm = np.where(k == 0, 1.0 / math.sqrt(length), math.sqrt(2.0 / length))
    freq = k * math.pi / length
    arg = np.outer(x, freq)
    c, s = np.cos(arg), np.sin(arg)
    return norm * c, -norm * freq * s, -norm * freq ** 2 * c


def _angular(order: int, parity: int, theta: np.ndarray) -> np.ndarray:
    return np.cos(order * theta) if parity == 0 else np.sin(order * theta)


def _disk_norm(order: int, root: float, radius: float) -> float:
    if root == 0.0:
        return 1.0 / math.sqrt(math.pi * radius ** 2)
    radial = 0.5 * radius ** 2 * (1.0 - (order / root) ** 2) * special.jv(order, root) ** 2
    angular = 2 * math.pi if order == 0 else math.pi
    return 1.0 / math.sqrt(radial * angular)


def _segment_distance(pts: np.ndarray, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    d = q - p
    length2 = float(d @ d)
    if length2 == 0.0:
        return np.linalg.norm(pts - p, axis=1)
    t = np.clip(((pts - p) @ d) / length2, 0.0, 1.0)
    return np.linalg.norm(pts - (p + t[:, None] * d), axis=1)


def _rectangle_point(s: np.ndarray, lx: float, ly: float) -> np.ndarray:
    per = 2 * (lx + ly)
    s = np.mod(s, per)
    x = np.select([s < lx, s < lx + ly, s < 2 * lx + ly], [s, lx, lx - (s - lx - ly)], 0.0)
    y = np.select([s < lx, s < lx + ly, s < 2 * lx + ly], [0.0, s - lx, ly], ly - (s - 2 * lx - ly))
    return np.stack([x, y], axis=-1)


# ---------------------------------------------------------------------------
# builders


def build_interval_model(length: float, J: int, *, interior_cells: int = 4096) -> tuple[ModelManifold, SpectralDataset]:
    if not length > 0:
        raise ValueError("interval length must be positive")
    if J < 2:
        raise ValueError("need at least two modes")
    h = length / interior_cells
    nodes = ((np.arange(interior_cells) + 0.5) * h)[:, None]
    bnodes = np.array([[0.0], [length]])
    k = np.arange(J)
    model = ModelManifold(
        kind="interval", params={"length": float(length)}, n=1, diameter=float(length),
        volume=float(length), boundary_measure=2.0,
        interior_nodes=nodes, interior_weights=np.full(interior_cells, h),
        boundary_nodes=bnodes, boundary_weights=np.ones(2), arclength=None,
        modes=tuple((int(i),) for i in k),
        metadata={"K1": 0.0, "K2": 0.0, "i0": length / 2, "r0": length / 2},
    )
    lambdas = (k * math.pi / length) ** 2
    traces = _cos_factor(bnodes[:, 0], k, length).T
    ds = SpectralDataset(n=1, boundary_nodes=bnodes, weights=np.ones(2), lambdas=lambdas,
                         traces=traces, model=model.descriptor())
    return model, ds


def _rectangle_modes(lx: float, ly: float, J: int) -> list[tuple[int, int, float]]:
    kmax = J
    cands = []
    for kx in range(kmax):
        for ky in range(kmax):
            lam = (kx * math.pi / lx) ** 2 + (ky * math.pi / ly) ** 2
            cands.append((lam, kx, ky))
    # ties are decided on a 12-digit rounding so float noise cannot reorder them
    cands.sort(key=lambda c: (float(f"{c[0]:.12e}"), c[1], c[2]))
    return [(kx, ky, lam) for lam, kx, ky in cands[:J]]


def _rectangle_boundary(lx: float, ly: float, spacing: float) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Midpoint nodes on each side, traversed counterclockwise from the origin."""
    sides = [(lx, 0.0), (ly, lx), (lx, lx + ly), (ly, 2 * lx + ly)]
    tangents = [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)]
    s_all, w_all, t_all = [], [], []
    for (side_len, offset), tan in zip(sides, tangents):
        count = max(1, int(round(side_len / spacing)))
        step = side_len / count
        s_all.append(offset + (np.arange(count) + 0.5) * step)
        w_all.append(np.full(count, step))
        t_all.append(np.tile(tan, (count, 1)))
    s = np.concatenate(s_all)
    return _rectangle_point(s, lx, ly), np.concatenate(w_all), s, np.concatenate(t_all)


def build_rectangle_model(Lx: float, Ly: float, J: int, *, spacing: float = 0.02,
                          boundary_spacing: float | None = None) -> tuple[ModelManifold, SpectralDataset]:
    if not (Lx > 0 and Ly > 0):
        raise ValueError("rectangle side lengths must be positive")
    if J < 2:
        raise ValueError("need at least two modes")
    modes = _rectangle_modes(Lx, Ly, J)
    kx = np.array([m[0] for m in modes])
    ky = np.array([m[1] for m in modes])
    nx, ny = max(1, int(math.ceil(Lx / spacing))), max(1, int(math.ceil(Ly / spacing)))
    gx = (np.arange(nx) + 0.5) * Lx / nx
    gy = (np.arange(ny) + 0.5) * Ly / ny
    xx, yy = np.meshgrid(gx, gy, indexing="ij")
    interior = np.stack([xx.ravel(), yy.ravel()], axis=1)
    bnodes, bweights, arc, tang = _rectangle_boundary(Lx, Ly, boundary_spacing or spacing)

    fx, fx1, fx2 = _cos_derivs(bnodes[:, 0], kx, Lx)
    fy, fy1, fy2 = _cos_derivs(bnodes[:, 1], ky, Ly)
    tx, ty = tang[:, :1], tang[:, 1:]
    traces = (fx * fy).T
    d1 = (tx * fx1 * fy + ty * fx * fy1).T
    d2 = (tx ** 2 * fx2 * fy + 2 * tx * ty * fx1 * fy1 + ty ** 2 * fx * fy2).T

    model = ModelManifold(
        kind="rectangle", params={"Lx": float(Lx), "Ly": float(Ly)}, n=2,
        diameter=math.hypot(Lx, Ly), volume=Lx * Ly, boundary_measure=2 * (Lx + Ly),
        interior_nodes=interior, interior_weights=np.full(len(interior), Lx * Ly / (nx * ny)),
        boundary_nodes=bnodes, boundary_weights=bweights, arclength=arc,
        modes=tuple((int(a), int(b)) for a, b, _ in modes),
        metadata={"K1": 0.0, "K2": 0.0, "i0": min(Lx, Ly) / 2, "r0": min(Lx, Ly) / 2},
    )
    ds = SpectralDataset(n=2, boundary_nodes=bnodes, weights=bweights,
                         lambdas=np.array([m[2] for m in modes]), traces=traces, d1=d1, d2=d2,
                         arclength=arc, perimeter=model.boundary_measure, model=model.descriptor())
    return model, ds


def bessel_derivative_zeros(order: int, upto: float, step: float = SCAN_STEP) -> list[float]:
    """Positive zeros of J_order' below ``upto``, by scanning then bisection."""
    def f(x: float) -> float:
        return float(special.jvp(order, x))

    # J_m' keeps one sign on (0, m] for m >= 1, so the scan can start there
    lo = max(float(order), step / 2)
    roots = []
    f_lo = f(lo)
    x = lo
    while x < upto:
        hi = min(x + step, upto)
        f_hi = f(hi)
        if f_lo == 0.0:
            roots.append(x)
        elif f_lo * f_hi < 0:
            roots.append(_bisect(f, x, hi, f_lo))
        x, f_lo = hi, f_hi
    return roots


def _bisect(f, a: float, b: float, fa: float) -> float:
    lo, hi = a, b
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fm < 0) == (fa < 0):
            lo, fa = mid, fm
        else:
            hi = mid
    if hi - lo > 1e-10 * max(1.0, abs(lo)):
        raise RootFindingError(f"bisection did not converge on [{a!r}, {b!r}]")
    return 0.5 * (lo + hi)


def _disk_modes(J: int) -> list[tuple[int, int, int, float]]:
    """(order, radial index, parity, root) of the J lowest Neumann modes of the unit disk."""
    upto = 2.0 * math.sqrt(J + 2) + 3.0
    while True:
        modes: list[tuple[int, int, int, float]] = [(0, 0, 0, 0.0)]
        order = 0
        while order <= upto:
            for s, root in enumerate(bessel_derivative_zeros(order, upto), start=1):
                modes.append((order, s, 0, root))
                if order > 0:
                    modes.append((order, s, 1, root))
            order += 1
        if len(modes) >= J:
            modes.sort(key=lambda m: (m[3], m[0], m[1], m[2]))
            return modes[:J]
        upto *= 1.5


def build_disk_model(R: float, J: int, *, radial_cells: int = 120, angular_cells: int = 360,
                     boundary_nodes: int = 720) -> tuple[ModelManifold, SpectralDataset]:
    if not R > 0:
        raise ValueError("disk radius must be positive")
    if J < 1:
        raise ValueError("need at least one mode")
    modes = _disk_modes(J)
    dr, dth = R / radial_cells, 2 * math.pi / angular_cells
    rr = (np.arange(radial_cells) + 0.5) * dr
    th = (np.arange(angular_cells) + 0.5) * dth
    r2, t2 = np.meshgrid(rr, th, indexing="ij")
    interior = np.stack([(r2 * np.cos(t2)).ravel(), (r2 * np.sin(t2)).ravel()], axis=1)
    weights = (r2 * dr * dth).ravel()

    per = 2 * math.pi * R
    arc = (np.arange(boundary_nodes) + 0.5) * per / boundary_nodes
    theta = arc / R
    bnodes = np.stack([R * np.cos(theta), R * np.sin(theta)], axis=1)
    bweights = np.full(boundary_nodes, per / boundary_nodes)

    traces = np.empty((J, boundary_nodes))
    d1 = np.empty_like(traces)
    d2 = np.empty_like(traces)
    for j, (order, _, parity, root) in enumerate(modes):
        amp = _disk_norm(order, root, R) * special.jv(order, root)
        if parity == 0:
            traces[j] = amp * np.cos(order * theta)
            d1[j] = -amp * order * np.sin(order * theta) / R
        else:
            traces[j] = amp * np.sin(order * theta)
            d1[j] = amp * order * np.cos(order * theta) / R
        d2[j] = -(order / R) ** 2 * traces[j]

    model = ModelManifold(
        kind="disk", params={"R": float(R)}, n=2, diameter=2.0 * R, volume=math.pi * R ** 2,
        boundary_measure=per, interior_nodes=interior, interior_weights=weights,
        boundary_nodes=bnodes, boundary_weights=bweights, arclength=arc,
        modes=tuple(modes), metadata={"K1": 0.0, "K2": 1.0 / R, "i0": R, "r0": R},
    )
    lambdas = np.array([(m[3] / R) ** 2 for m in modes])
    ds = SpectralDataset(n=2, boundary_nodes=bnodes, weights=bweights, lambdas=lambdas,
                         traces=traces, d1=d1, d2=d2, arclength=arc, perimeter=per,
                         model=model.descriptor())
    return model, ds


def build_model(descriptor: dict, J: int, **resolution) -> tuple[ModelManifold, SpectralDataset]:
    """Dispatch on a descriptor such as ``{"kind": "disk", "R": 1.0}``."""
    kind = descriptor.get("kind")
    if kind == "interval":
        return build_interval_model(descriptor["length"], J, **resolution)
    if kind == "rectangle":
        return build_rectangle_model(descriptor["Lx"], descriptor["Ly"], J, **resolution)
    if kind == "disk":
        return build_disk_model(descriptor["R"], J, **resolution)
    raise ValueError(f"unknown model kind {kind!r}")


# ---------------------------------------------------------------------------
# perturbations


@dataclass(frozen=True)
class PerturbationDraw:
    """Random ingredients of one perturbation, reproducible from the seed.

    ``shifts[j]`` is added to the square root of the j-th eigenvalue. For
    curves, ``cos_coef``/``sin_coef`` (shape (count, order + 1)) define
    trigonometric polynomials in arclength with frequencies ``omegas``; for
    the interval, ``node_offsets`` (shape (count, 2)) are constant offsets.
    """

    count: int
    shifts: np.ndarray
    omegas: np.ndarray | None
    cos_coef: np.ndarray | None
    sin_coef: np.ndarray | None
    node_offsets: np.ndarray | None

    def field(self, j: int, s: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Value, first and second arclength derivative of the j-th field."""
        arg = np.outer(s, self.omegas)
        c, sn = np.cos(arg), np.sin(arg)
        a, b, w = self.cos_coef[j], self.sin_coef[j], self.omegas
        val = c @ a + sn @ b
        der = (-sn * w) @ a + (c * w) @ b
        der2 = (-c * w ** 2) @ a + (-sn * w ** 2) @ b
        return val, der, der2

    def certified_norm(self, j: int) -> float:
        """Upper bound of sup|p| + sup|p'| + sup|p''| from the coefficients."""
        if self.node_offsets is not None:
            return float(np.abs(self.node_offsets[j]).max())
        w = self.omegas
        return float(((np.abs(self.cos_coef[j]) + np.abs(self.sin_coef[j])) * (1 + w + w ** 2)).sum())


def perturbation_draw(ds: SpectralDataset, delta: float, seed: int) -> PerturbationDraw:
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    count = ds.J if delta == 0 else min(ds.J, int(math.floor(1.0 / delta)))
    rng = np.random.default_rng(seed)
    cap = PERTURBATION_FILL * delta
    shifts = rng.uniform(-cap, cap, size=count)
    if count:
        shifts[0] = abs(shifts[0])
    # equal eigenvalues receive sorted shifts so the perturbed list stays ordered
    lam = ds.lambdas[:count]
    start = 0
    while start < count:
        stop = start
        while stop + 1 < count and lam[stop + 1] == lam[start]:
            stop += 1
        shifts[start:stop + 1] = np.sort(shifts[start:stop + 1])
        start = stop + 1

    if ds.n == 1:
        offsets = rng.uniform(-cap, cap, size=(count, ds.n_boundary))
        return PerturbationDraw(count, shifts, None, None, None, offsets)

    orders = np.arange(PERTURBATION_ORDER + 1)
    omegas = 2 * math.pi * orders / ds.perimeter
    decay = 1.0 / (1.0 + orders) ** 2
    cos_coef = rng.standard_normal((count, orders.size)) * decay
    sin_coef = rng.standard_normal((count, orders.size)) * decay
    sin_coef[:, 0] = 0.0
    bound = ((np.abs(cos_coef) + np.abs(sin_coef)) * (1 + omegas + omegas ** 2)).sum(axis=1)
    scale = cap / bound
    return PerturbationDraw(count, shifts, omegas, cos_coef * scale[:, None],
                            sin_coef * scale[:, None], None)


def perturb_dataset(ds: SpectralDataset, delta: float, seed: int) -> SpectralDataset:
    """Return a delta-approximation of exact data (``ds`` itself when delta = 0)."""
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if not ds.exact:
        raise ValueError("perturbation expects exact data")
    if delta == 0:
        return ds
    draw = perturbation_draw(ds, delta, seed)
    count = draw.count
    root = np.sqrt(ds.lambdas[:count]) + draw.shifts
    lambdas = ds.lambdas.copy()
    lambdas[:count] = root ** 2
    traces = ds.traces.copy()
    d1 = None if ds.d1 is None else ds.d1.copy()
    d2 = None if ds.d2 is None else ds.d2.copy()
    for j in range(count):
        if ds.n == 1:
            traces[j] += draw.node_offsets[j]
        else:
            val, der, der2 = draw.field(j, ds.arclength)
            traces[j] += val
            d1[j] += der
            d2[j] += der2
    return replace(ds, lambdas=lambdas, traces=traces, d1=d1, d2=d2,
                   delta=float(delta), seed=int(seed))


# ---------------------------------------------------------------------------
# partitions


def make_partition(model: ModelManifold, eta: float, strategy: str = "greedy") -> BoundaryPartition:
    """Voronoi cells of a maximal eta/2-separated set of boundary nodes.

    ``strategy="greedy"`` walks the boundary in arclength order and keeps
    every node at least eta/2 from the previous centre; ``"sparse"`` spaces
    centres uniformly at just under eta, which is also maximal and
    eta/2-separated but yields roughly half as many cells.
    """
    if not eta > 0:
        raise ValueError("eta must be positive")
    nb = len(model.boundary_weights)
    if model.n == 1:
        cells = (np.array([0]), np.array([1]))
        return BoundaryPartition(eta=float(eta), cells=cells, measures=np.ones(2),
                                 diameters=np.zeros(2), centers=np.array([0, 1]), n_boundary=nb)

    s = model.arclength
    per = model.boundary_measure
    spacing = float(np.max(model.boundary_weights))
    if strategy == "greedy":
        centers = [0]
        for i in range(1, nb):
            if s[i] - s[centers[-1]] >= eta / 2 and per - (s[i] - s[0]) >= eta / 2:
                centers.append(i)
        built = _voronoi_cells(model, centers) if len(centers) >= 2 else None
    elif strategy == "sparse":
        # snapping targets to nodes can widen a cell; add centres until all fit
        count = int(math.floor(per / eta)) + 1
        while True:
            targets = s[0] + np.arange(count) * per / count
            centers = sorted({int(np.argmin(np.abs(s - t))) for t in targets})
            built = _voronoi_cells(model, centers) if len(centers) >= 2 else None
            if built is None or np.all(built[3] <= eta * (1 + 1e-12)) or per / count < 4 * spacing:
                break
            count += 1
    else:
        raise ValueError(f"unknown partition strategy {strategy!r}")
    if len(centers) < 2:
        raise ValueError("partition needs at least two cells; decrease eta")
    cells, measures, arcs, diameters = built
    if np.any(diameters > eta * (1 + 1e-12)):
        raise ValueError(f"a partition cell is wider than eta; boundary spacing {spacing:.3g} is too "
                         f"coarse for eta = {eta:g}")
    if np.any(measures < eta / 3 * (1 - 1e-9)):
        raise ValueError("a partition cell is smaller than a boundary ball of radius eta/6")
    return BoundaryPartition(eta=float(eta), cells=cells, measures=measures, diameters=diameters,
                             centers=np.array(centers), arcs=arcs, n_boundary=nb)


def _voronoi_cells(model: ModelManifold, centers: list[int]):
    """Arclength Voronoi cells of the given centre nodes: (cells, measures, arcs, diameters)."""
    s = model.arclength
    per = model.boundary_measure
    sc = s[np.array(centers)]
    nxt = np.roll(sc, -1)
    nxt[-1] += per
    ends = 0.5 * (sc + nxt)
    starts = np.roll(ends, 1)
    starts[0] -= per
    starts = np.mod(starts, per)
    lengths = np.mod(ends - starts, per)
    ends = starts + lengths

    origin = starts[0]
    offsets = np.mod(starts - origin, per)
    node_off = np.mod(s - origin, per)
    owner = np.searchsorted(offsets, node_off, side="right") - 1
    cells = tuple(np.flatnonzero(owner == c) for c in range(len(centers)))
    spacing = float(np.max(model.boundary_weights))
    for c, idx in enumerate(cells):
        if idx.size == 0:
            raise ValueError(f"cell {c + 1} holds no boundary node; boundary spacing must be below "
                             f"{lengths[c]:.3g} (currently {spacing:.3g})")
    measures = np.array([model.boundary_weights[c].sum() for c in cells])
    arcs = tuple((float(a), float(b)) for a, b in zip(starts, ends))
    diameters = np.array([model.arc_diameter(a, b) for a, b in arcs])
    return cells, measures, arcs, diameters


# ---------------------------------------------------------------------------
# ground-truth oracles


def _check_alpha(alpha: Sequence[float], partition: BoundaryPartition) -> np.ndarray:
    a = np.asarray(alpha, dtype=float)
    if a.shape != (partition.N + 1,):
        raise ValueError(f"alpha must have {partition.N + 1} entries")
    if np.any(a < 0):
        raise ValueError("alpha entries must be nonnegative")
    return a


def domain_mask(model: ModelManifold, partition: BoundaryPartition, alpha: Sequence[float],
                points: np.ndarray | None = None) -> np.ndarray:
    """Boolean mask of points lying in the union of the balls d(x, Gamma_k) < alpha_k."""
    a = _check_alpha(alpha, partition)
    pts = model.interior_nodes if points is None else np.atleast_2d(points)
    mask = np.zeros(len(pts), dtype=bool)
    if a[0] > 0:
        mask |= model.boundary_distance(pts) < a[0]
    active = np.flatnonzero(a[1:] > 0)
    if active.size:
        dist = model.cell_distances(pts, partition)[:, active]
        mask |= np.any(dist < a[1:][active], axis=1)
    return mask


def mesh_volume(model: ModelManifold, mask: np.ndarray) -> float:
    return float(model.interior_weights[mask].sum())


def true_volume(model: ModelManifold, partition: BoundaryPartition, alpha: Sequence[float]) -> float:
    """Volume of the domain of influence of alpha.

    Exact interval arithmetic on the interval model; interior quadrature with
    exact point-to-boundary distances otherwise.
    """
    a = _check_alpha(alpha, partition)
    if model.kind == "interval":
        length = model.params["length"]
        left = min(max(a[0], a[1]), length)
        right = min(max(a[0], a[2]), length)
        return float(min(length, left + right))
    return mesh_volume(model, domain_mask(model, partition, a))


def true_volumes(model: ModelManifold, partition: BoundaryPartition,
                 alphas: Sequence[Sequence[float]]) -> np.ndarray:
    """true_volume for many indices, sharing one distance evaluation."""
    checked = [_check_alpha(a, partition) for a in alphas]
    if model.kind == "interval" or not checked:
        return np.array([true_volume(model, partition, a) for a in checked])
    pts = model.interior_nodes
    dist = model.cell_distances(pts, partition)
    dm = model.boundary_distance(pts)
    out = np.empty(len(checked))
    for n, a in enumerate(checked):
        mask = dm < a[0] if a[0] > 0 else np.zeros(len(pts), dtype=bool)
        active = np.flatnonzero(a[1:] > 0)
        if active.size:
            mask |= np.any(dist[:, active] < a[1:][active], axis=1)
        out[n] = mesh_volume(model, mask)
    return out


def true_slice_inner(model: ModelManifold, partition: BoundaryPartition, beta: Sequence[int],
                     eta: float) -> float:
    """Quadrature volume of the set where eta*(beta_i - 2) <= d(x, Gamma_i) < eta*beta_i for all nonzero beta_i."""
    b = np.asarray(beta, dtype=float)
    active = np.flatnonzero(b[1:] > 0)
    dist = model.cell_distances(model.interior_nodes, partition)[:, active]
    hi = eta * b[1:][active]
    ok = np.all((dist < hi) & (dist >= hi - 2 * eta), axis=1)
    return mesh_volume(model, ok)


def true_slice_boundary(model: ModelManifold, partition: BoundaryPartition, k: int, beta_k: int,
                        i: int, beta_i: int, eta: float) -> float:
    """Quadrature volume of the boundary-layer slice attached to the pair (k, i)."""
    pts = model.interior_nodes
    dist = model.cell_distances(pts, partition)
    dk, di = dist[:, k - 1], dist[:, i - 1]
    dm = model.boundary_distance(pts)
    rk, ri = eta * beta_k, eta * beta_i
    ok = (dk < rk) & (di < ri) & (dm >= rk - 2 * eta) & (di >= ri - 2 * eta)
    return mesh_volume(model, ok)


def sample_points(model: ModelManifold, spacing: float) -> np.ndarray:
    """Grid of interior sample points (boundary included) at roughly the given spacing."""
    if not spacing > 0:
        raise ValueError("sample spacing must be positive")
    if model.kind == "interval":
        length = model.params["length"]
        return np.linspace(0.0, length, int(math.ceil(length / spacing)) + 1)[:, None]
    if model.kind == "rectangle":
        lx, ly = model.params["Lx"], model.params["Ly"]
        gx = np.linspace(0.0, lx, int(math.ceil(lx / spacing)) + 1)
        gy = np.linspace(0.0, ly, int(math.ceil(ly / spacing)) + 1)
        xx, yy = np.meshgrid(gx, gy, indexing="ij")
        return np.stack([xx.ravel(), yy.ravel()], axis=1)
    radius = model.params["R"]
    count = int(math.ceil(2 * radius / spacing)) + 1
    g = np.linspace(-radius, radius, count)
    xx, yy = np.meshgrid(g, g, indexing="ij")
    pts = np.stack([xx.ravel(), yy.ravel()], axis=1)
    return pts[np.hypot(pts[:, 0], pts[:, 1]) <= radius * (1 + 1e-12)]


def true_boundary_distances(model: ModelManifold, partition: BoundaryPartition,
                            sample_spacing: float) -> FiniteMetricSpace:
    """Sampled boundary distance functions, one value per cell, with max-norm distances."""
    pts = sample_points(model, sample_spacing)
    vecs = model.cell_distances(pts, partition)
    labels = tuple("x=" + ",".join(format(c, ".6g") for c in p) for p in pts)
    return FiniteMetricSpace(labels, linf_distance_matrix(vecs, vecs), vecs)


__all__ = [
    "SpectralDataset", "BoundaryPartition", "ModelManifold", "RootFindingError",
    "build_interval_model", "build_rectangle_model", "build_disk_model", "build_model",
    "bessel_derivative_zeros", "perturb_dataset", "perturbation_draw", "PerturbationDraw",
    "make_partition", "true_volume", "true_volumes", "domain_mask", "mesh_volume", "true_slice_inner",
    "true_slice_boundary", "sample_points", "true_boundary_distances",
]
