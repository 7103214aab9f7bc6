"""Norms and boundary wave traces of Fourier vectors."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .models import ModelManifold, SpectralDataset


@dataclass(frozen=True, eq=False)
class BoundaryTimeField:
    """A wave restricted to boundary nodes on a uniform time grid.

    Arrays are indexed (boundary node, time node).
    """

    values: np.ndarray
    dt_values: np.ndarray
    dtt_values: np.ndarray
    times: np.ndarray
    weights: np.ndarray
    n: int
    d1: np.ndarray | None = None
    d2: np.ndarray | None = None

    @property
    def T(self) -> float:
        return float(self.times[-1])

    def scaled(self, c: float) -> "BoundaryTimeField":
        def mul(a):
            return None if a is None else c * a
        return BoundaryTimeField(c * self.values, c * self.dt_values, c * self.dtt_values,
                                 self.times, self.weights, self.n, mul(self.d1), mul(self.d2))


def _coeffs(v: np.ndarray, ds: "SpectralDataset") -> np.ndarray:
    v = np.asarray(v, dtype=float).ravel()
    if v.size > ds.J:
        raise ValueError(f"vector has {v.size} coefficients but the dataset only {ds.J} modes")
    if not np.all(np.isfinite(v)):
        raise ValueError("Fourier coefficients must be finite")
    return v


def sobolev_norm(v: np.ndarray, ds: "SpectralDataset", s: float) -> float:
    """sqrt(sum (1 + lambda_j^s) v_j^2)."""
    if not 1 <= s <= 3:
        raise ValueError("Sobolev order must lie in [1, 3]")
    v = _coeffs(v, ds)
    lam = ds.lambdas[: v.size]
    return float(math.sqrt(np.sum((1.0 + lam ** s) * v ** 2)))


def max_frequency(ds: "SpectralDataset", J: int | None = None) -> float:
    J = ds.J if J is None else J
    return float(math.sqrt(max(float(np.max(ds.lambdas[:J])), 0.0)))


def default_dt(ds: "SpectralDataset", J: int | None = None) -> float:
    """pi / (8 sqrt(lambda_J)): sixteen nodes per period of the fastest mode."""
    w = max_frequency(ds, J)
    return math.pi / (8 * w) if w > 0 else 0.125


def time_grid(T: float, dt: float) -> np.ndarray:
    """Uniform symmetric grid on [-T, T] with spacing at most dt."""
    steps = max(2, int(math.ceil(2 * T / dt - 1e-9)))
    if steps % 2:
        steps += 1  # keep t = 0 on the grid
    return np.linspace(-T, T, steps + 1)


def wave_trace(v: np.ndarray, ds: "SpectralDataset", T: float, dt: float | None = None) -> BoundaryTimeField:
    """Boundary values of sum_j v_j cos(sqrt(lambda_j) t) phi_j and their derivatives."""
    if not T > 0:
        raise ValueError("time window must be positive")
    v = _coeffs(v, ds)
    J = v.size
    if dt is None:
        dt = default_dt(ds, J)
    w_max = max_frequency(ds, J)
    if w_max > 0 and dt > math.pi / (4 * w_max) * (1 + 1e-12):
        raise ValueError("time step violates the pi/(4 sqrt(lambda_J)) resolution guard")
    if ds.n == 2 and (ds.d1 is None or ds.d2 is None):
        raise ValueError("two-dimensional data needs tangential derivative arrays")
    t = time_grid(T, dt)
    omega = np.sqrt(np.maximum(ds.lambdas[:J], 0.0))
    arg = np.outer(omega, t)
    cos, sin = np.cos(arg), np.sin(arg)
    tr = ds.traces[:J].T
    values = (tr * v) @ cos
    dt_values = (tr * (v * omega)) @ (-sin)
    dtt_values = (tr * (v * omega ** 2)) @ (-cos)
    d1 = d2 = None
    if ds.n == 2:
        d1 = (ds.d1[:J].T * v) @ cos
        d2 = (ds.d2[:J].T * v) @ cos
    return BoundaryTimeField(values, dt_values, dtt_values, t, ds.weights, ds.n, d1, d2)


def trapezoid_weights(t: np.ndarray) -> np.ndarray:
    q = np.zeros_like(t)
    h = np.diff(t)
    q[:-1] += h / 2
    q[1:] += h / 2
    return q


def window_weights(times: np.ndarray, a: float) -> np.ndarray:
    """Trapezoid weights restricted to [-a, a], as weights on the full grid.

    Partial end cells are handled by linear interpolation of the integrand,
    which keeps the rule a fixed linear functional of the node values.
    """
    T = times[-1]
    if a > T * (1 + 1e-12):
        raise ValueError("integration window exceeds the field's time range")
    if a >= T * (1 - 1e-12):
        return trapezoid_weights(times)
    q = np.zeros_like(times)
    inside = np.flatnonzero(np.abs(times) <= a)
    lo, hi = inside[0], inside[-1]
    q[lo:hi + 1] = trapezoid_weights(times[lo:hi + 1])
    # tail pieces [-a, t_lo] and [t_hi, a]
    for edge, outer in ((lo, lo - 1), (hi, hi + 1)):
        length = a - abs(times[edge])
        if length <= 0:
            continue
        h = abs(times[outer] - times[edge])
        theta = length / h  # interpolation fraction toward the outer node
        q[edge] += length * (1 - theta / 2)
        q[outer] += length * theta / 2
    return q


def h22_norm(field: BoundaryTimeField, gamma: np.ndarray | None, a: float) -> float:
    """Space-time norm of the trace over gamma x [-a, a] (gamma=None: whole boundary)."""
    q = window_weights(field.times, a)
    idx = np.arange(field.values.shape[0]) if gamma is None else np.asarray(gamma)
    w = field.weights[idx][:, None]
    dens = (w * (field.values[idx] ** 2 + field.dt_values[idx] ** 2 + field.dtt_values[idx] ** 2)).sum(axis=0)
    if field.n == 2:
        dens = dens + (w * (field.d1[idx] ** 2 + field.d2[idx] ** 2)).sum(axis=0)
    return float(math.sqrt(max(float(dens @ q), 0.0)))


def _gram(arr: np.ndarray, idx: np.ndarray, w: np.ndarray) -> np.ndarray:
    sub = arr[:, idx]
    return (sub * w[idx]) @ sub.T


def boundary_grams(ds: "SpectralDataset", gamma: np.ndarray | None, J: int) -> tuple[np.ndarray, np.ndarray]:
    """(value Gram, full H^2(gamma) Gram) of the first J traces over gamma."""
    idx = np.arange(ds.n_boundary) if gamma is None else np.asarray(gamma)
    g_val = _gram(ds.traces[:J], idx, ds.weights)
    if ds.n == 1:
        return g_val, g_val
    g_full = g_val + _gram(ds.d1[:J], idx, ds.weights) + _gram(ds.d2[:J], idx, ds.weights)
    return g_val, g_full


def time_kernels(lambdas: np.ndarray, a: float, dt: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Quadrature kernels for the value, velocity and acceleration terms on [-a, a]."""
    t = time_grid(a, dt)
    q = trapezoid_weights(t)
    omega = np.sqrt(np.maximum(lambdas, 0.0))
    arg = np.outer(omega, t)
    cos, sin = np.cos(arg), np.sin(arg)
    k0 = (cos * q) @ cos.T
    ws = omega[:, None] * sin
    k1 = (ws * q) @ ws.T
    lc = (omega ** 2)[:, None] * cos
    k2 = (lc * q) @ lc.T
    return k0, k1, k2


def h22_quadratic_form(ds: "SpectralDataset", gamma: np.ndarray | None, a: float, J: int,
                       dt: float | None = None, grams=None, kernels=None) -> np.ndarray:
    """Matrix Q with v^T Q v = h22_norm(wave_trace(v, ds, a, dt), gamma, a)^2.

    The space-time integrand separates into time kernels and boundary Gram
    matrices, combined entrywise.
    """
    if dt is None:
        dt = default_dt(ds, J)
    g_val, g_full = grams if grams is not None else boundary_grams(ds, gamma, J)
    k0, k1, k2 = kernels if kernels is not None else time_kernels(ds.lambdas[:J], a, dt)
    q = k0 * g_full + (k1 + k2) * g_val
    return 0.5 * (q + q.T)


def project_samples(u_samples: np.ndarray, model: "ModelManifold", ds: "SpectralDataset") -> np.ndarray:
    """Fourier coefficients of a function sampled on the model's interior mesh."""
    u = np.asarray(u_samples, dtype=float).ravel()
    if u.size != len(model.interior_weights):
        raise ValueError("samples do not match the interior quadrature mesh")
    if not ds.exact:
        raise ValueError("projection uses the analytic eigenfunctions of exact data")
    phi = model.eigenfunctions(model.interior_nodes, ds.J)
    return phi.T @ (model.interior_weights * u)


def l2_distance_on_mesh(coeffs: np.ndarray, target: np.ndarray, model: "ModelManifold") -> float:
    """L2(M) distance between sum coeffs_j phi_j and target samples, by mesh quadrature."""
    phi = model.eigenfunctions(model.interior_nodes, len(coeffs))
    diff = phi @ np.asarray(coeffs, dtype=float) - target
    return float(math.sqrt(model.interior_weights @ diff ** 2))
