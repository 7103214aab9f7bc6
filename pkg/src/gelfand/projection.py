"""Projection onto the set of Fourier vectors with small boundary waves.

The feasible set is an intersection of ellipsoids {v : v^T A_i v <= c_i}: an
H^1 cap, one space-time trace cap per active boundary cell, and (for
perturbed data) the unit ball. Finding the nearest feasible point to ``u``
is a convex QCQP. Two solvers are provided:

* ``"dual"`` (default): projected Newton ascent on the Lagrangian dual. For
  multipliers mu >= 0 the inner minimiser is w(mu) = (I + sum mu_i A_i)^{-1} u,
  and the dual gradient is w^T A_i w - c_i.
* ``"penalty"``: gradient descent on a quadratic-penalty objective with a
  geometrically increasing penalty weight.

Both end with a radial feasibility step: every constraint is homogeneous, so
shrinking w toward 0 restores feasibility without leaving the segment [0, w].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import TYPE_CHECKING, Sequence

import numpy as np
from scipy import linalg

from .spectral import (default_dt, h22_norm, sobolev_norm, time_kernels, boundary_grams,
                       h22_quadratic_form, wave_trace)

if TYPE_CHECKING:
    from .models import BoundaryPartition, SpectralDataset

# radial safety margin applied by the final feasibility step
FEASIBILITY_MARGIN = 1e-7
# dual gradient accuracy accepted when Newton stalls on rounding noise
STALL_TOL = 1e-5


class SolverError(RuntimeError):
    """The projection could not produce a feasible point."""


@dataclass(frozen=True)
class SolverConfig:
    method: str = "dual"
    stages: int = 10
    penalty0: float = 1.0
    penalty_growth: float = 4.0
    iters_per_stage: int = 500
    step: float | None = None
    tol: float = 1e-8
    max_newton: int = 200

    @classmethod
    def from_dict(cls, obj: dict | None) -> "SolverConfig":
        obj = dict(obj or {})
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown solver option(s): {', '.join(sorted(unknown))}")
        cfg = cls(**obj)
        if cfg.method not in ("dual", "penalty"):
            raise ValueError(f"solver.method must be 'dual' or 'penalty', got {cfg.method!r}")
        if cfg.tol <= 0 or cfg.stages < 1 or cfg.iters_per_stage < 1:
            raise ValueError("solver.tol, solver.stages and solver.iters_per_stage must be positive")
        return cfg

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class ConstraintThresholds:
    h1_bound: float
    h22_bound: float
    J: int
    lam_J: float
    Lambda: float
    gamma: float
    eps1: float
    delta: float
    C0: float = 1.0
    C0p: float = 1.0

    @property
    def unit_ball(self) -> bool:
        return self.delta > 0


def threshold_caps(J: int, lam_J: float, Lambda: float, gamma: float, eps1: float, delta: float,
                   C0: float = 1.0, C0p: float = 1.0) -> tuple[float, float]:
    """(H^1 cap, trace cap) inflated for delta-perturbed data."""
    h1_sq = 9.0 * C0 ** 2 * Lambda ** 2 * gamma ** -6 + 3.0 * math.sqrt(lam_J) * delta
    return math.sqrt(h1_sq), eps1 + C0p * J * lam_J ** 1.5 * delta


def build_thresholds(J: int, Lambda: float, gamma: float, eps1: float, delta: float,
                     ds: "SpectralDataset", C0: float = 1.0, C0p: float = 1.0) -> ConstraintThresholds:
    for name, val in (("J", J), ("Lambda", Lambda), ("gamma", gamma), ("eps1", eps1), ("C0", C0), ("C0p", C0p)):
        if not val > 0:
            raise ValueError(f"{name} must be positive")
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if J > ds.J:
        raise ValueError(f"J = {J} exceeds the {ds.J} modes available")
    lam_J = float(ds.lambdas[J - 1])
    h1, h22 = threshold_caps(J, lam_J, Lambda, gamma, eps1, delta, C0, C0p)
    return ConstraintThresholds(h1, h22, J, lam_J, Lambda, gamma, eps1, delta, C0, C0p)


def active_indices(alpha: Sequence[float]) -> list[int]:
    return [k for k, a in enumerate(alpha) if a > 0]


def check_membership(v: np.ndarray, thr: ConstraintThresholds, ds: "SpectralDataset",
                     partition: "BoundaryPartition", alpha: Sequence[float],
                     dt: float | None = None) -> tuple[bool, list[tuple[str, float]]]:
    """Whether v satisfies every cap, with the margin (cap minus norm) of each."""
    v = np.asarray(v, dtype=float)
    if np.linalg.norm(v) > 1 + 1e-9:
        raise ValueError("membership is only defined inside the unit ball")
    if dt is None:
        dt = default_dt(ds, thr.J)
    slacks = [("h1", thr.h1_bound - sobolev_norm(v, ds, 1))]
    for k in active_indices(alpha):
        field = wave_trace(v, ds, alpha[k], dt)
        slacks.append((f"trace[{k}]", thr.h22_bound - h22_norm(field, partition.subset(k), alpha[k])))
    return all(s >= 0 for _, s in slacks), slacks


@dataclass
class ProjectionResult:
    coeffs: np.ndarray
    objective: float
    iterations: int
    converged: bool
    scale: float


def _reduce_zero_caps(mats: list[np.ndarray], caps: list[float]):
    """Basis of vectors annihilated by every constraint with a zero cap."""
    zero = [A for A, c in zip(mats, caps) if c <= 0]
    if not zero:
        return None
    total = sum(zero)
    evals, evecs = np.linalg.eigh(total)
    keep = evals <= 1e-12 * max(1.0, float(evals.max()))
    return evecs[:, keep]


def _solve_dual(a: np.ndarray, mats: list[np.ndarray], cfg: SolverConfig) -> tuple[np.ndarray, int, bool]:
    """Projected Newton ascent on the dual of min |w - a|^2 s.t. w^T A_i w <= 1."""
    m, J = len(mats), a.size
    eye = np.eye(J)
    mu = np.zeros(m)

    def inner(mu_):
        H = eye + sum(mu_i * A for mu_i, A in zip(mu_, mats) if mu_i != 0.0)
        fac = linalg.cho_factor(H, lower=True, check_finite=False)
        w = linalg.cho_solve(fac, a, check_finite=False)
        return fac, w

    def dual_value(mu_, w):
        return float(a @ a - a @ w - mu_.sum())

    fac, w = inner(mu)
    value = dual_value(mu, w)
    converged = False
    it = 0
    for it in range(1, cfg.max_newton + 1):
        Aw = np.stack([A @ w for A in mats], axis=1)
        grad = Aw.T @ w - 1.0
        proj = np.where(mu > 0, grad, np.maximum(grad, 0.0))
        if np.max(np.abs(proj)) <= cfg.tol:
            converged = True
            break
        free = (mu > 0) | (grad > 0)
        Y = linalg.cho_solve(fac, Aw, check_finite=False)
        neg_hess = 2.0 * Aw.T @ Y
        direction = np.zeros(m)
        fi = np.flatnonzero(free)
        sub = neg_hess[np.ix_(fi, fi)]
        sub = sub + 1e-14 * np.trace(sub) * np.eye(fi.size)
        try:
            direction[fi] = linalg.solve(sub, grad[fi], assume_a="pos", check_finite=False)
        except (linalg.LinAlgError, ValueError):
            direction[fi] = grad[fi] / np.maximum(np.diag(sub), 1e-300)
        step = 1.0
        accepted = False
        for _ in range(60):
            trial = np.maximum(mu + step * direction, 0.0)
            try:
                fac_t, w_t = inner(trial)
            except linalg.LinAlgError:
                step *= 0.5
                continue
            val_t = dual_value(trial, w_t)
            if val_t >= value + 1e-4 * grad @ (trial - mu):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        stalled = val_t - value <= 1e-15 * max(1.0, abs(value)) and np.allclose(trial, mu, rtol=1e-12, atol=0)
        mu, fac, w, value = trial, fac_t, w_t, val_t
        if stalled:
            break
    if not converged:
        # rounding in w^T A w limits the attainable gradient accuracy
        grad = np.array([w @ A @ w for A in mats]) - 1.0
        proj = np.where(mu > 0, grad, np.maximum(grad, 0.0))
        converged = bool(np.max(np.abs(proj)) <= STALL_TOL)
    return w, it, converged


def _solve_penalty(a: np.ndarray, mats: list[np.ndarray], cfg: SolverConfig) -> tuple[np.ndarray, int, bool]:
    """Gradient descent on |w - a|^2 + rho * sum max(0, w^T A_i w - 1)^2 over stages of rho."""
    w = np.zeros_like(a)
    rho = cfg.penalty0
    iters = 0
    converged = False

    def objective(x, rho_):
        viol = np.array([max(0.0, x @ A @ x - 1.0) for A in mats])
        return float((x - a) @ (x - a) + rho_ * (viol ** 2).sum())

    for _ in range(cfg.stages):
        step = cfg.step or 0.5
        f = objective(w, rho)
        for _ in range(cfg.iters_per_stage):
            iters += 1
            grad = 2.0 * (w - a)
            for A in mats:
                Aw = A @ w
                viol = w @ Aw - 1.0
                if viol > 0:
                    grad += 4.0 * rho * viol * Aw
            gnorm2 = float(grad @ grad)
            if gnorm2 <= cfg.tol ** 2:
                converged = True
                break
            while step > 1e-300:
                trial = w - step * grad
                f_t = objective(trial, rho)
                if f_t <= f - 0.5 * step * gnorm2:
                    break
                step *= 0.5
            if f - f_t <= cfg.tol * 1e-3 * max(1.0, f):
                w, f = trial, f_t
                break
            w, f = trial, f_t
            step *= 2.0
        rho *= cfg.penalty_growth
    return w, iters, converged


def solve_projection(a: np.ndarray, mats: list[np.ndarray], caps: list[float],
                     cfg: SolverConfig = SolverConfig()) -> ProjectionResult:
    """Nearest point to ``a`` in {w : w^T A_i w <= caps_i for all i}."""
    a = np.asarray(a, dtype=float)
    J = a.size
    basis = _reduce_zero_caps(mats, caps)
    live = [(A, c) for A, c in zip(mats, caps) if c > 0]
    if basis is not None:
        if basis.shape[1] == 0:
            return ProjectionResult(np.zeros(J), float(a @ a), 0, True, 0.0)
        a_red = basis.T @ a
        mats_red = [basis.T @ A @ basis / c for A, c in live]
    else:
        a_red = a
        mats_red = [A / c for A, c in live]
    if mats_red:
        solver = _solve_dual if cfg.method == "dual" else _solve_penalty
        w_red, iters, converged = solver(a_red, mats_red, cfg)
    else:
        w_red, iters, converged = a_red.copy(), 0, True
    w = basis @ w_red if basis is not None else w_red
    # radial feasibility step against the original (unnormalised) constraints
    worst = max([float(w @ A @ w) / c for A, c in live] or [0.0])
    scale = 1.0 if worst <= 1.0 - FEASIBILITY_MARGIN else (1.0 - FEASIBILITY_MARGIN) / math.sqrt(worst)
    if basis is not None:
        w = basis @ (basis.T @ w)
    w = scale * w
    if not np.all(np.isfinite(w)):
        raise SolverError("projection produced non-finite coefficients")
    return ProjectionResult(w, float((w - a) @ (w - a)), iters, converged, scale)


def constraint_system(thr: ConstraintThresholds, ds: "SpectralDataset", partition: "BoundaryPartition",
                      alpha: Sequence[float], dt: float | None = None, grams=None,
                      kernels=None) -> tuple[list[np.ndarray], list[float]]:
    """Matrices and squared caps describing the feasible set for a given alpha.

    ``grams(k)`` and ``kernels(a)`` may be supplied as cached lookups.
    """
    J = thr.J
    if dt is None:
        dt = default_dt(ds, J)
    lam = ds.lambdas[:J]
    mats = [np.diag(1.0 + lam)]
    caps = [thr.h1_bound ** 2]
    if thr.unit_ball:
        mats.append(np.eye(J))
        caps.append(1.0)
    for k in active_indices(alpha):
        g = grams(k) if grams else boundary_grams(ds, partition.subset(k), J)
        kern = kernels(alpha[k]) if kernels else time_kernels(lam, alpha[k], dt)
        mats.append(h22_quadratic_form(ds, None, alpha[k], J, dt, grams=g, kernels=kern))
        caps.append(thr.h22_bound ** 2)
    return mats, caps


def minimize_over_U(u_coeffs: np.ndarray, thr: ConstraintThresholds, ds: "SpectralDataset",
                    partition: "BoundaryPartition", alpha: Sequence[float],
                    solver_cfg: SolverConfig = SolverConfig()) -> np.ndarray:
    """Coefficients of the feasible vector closest to ``u_coeffs``."""
    return project_onto_U(u_coeffs, thr, ds, partition, alpha, solver_cfg).coeffs


def project_onto_U(u_coeffs: np.ndarray, thr: ConstraintThresholds, ds: "SpectralDataset",
                   partition: "BoundaryPartition", alpha: Sequence[float],
                   solver_cfg: SolverConfig = SolverConfig(), grams=None, kernels=None,
                   verify: bool = True) -> ProjectionResult:
    """Like ``minimize_over_U`` but returns solver diagnostics.

    With ``verify`` the result is re-checked by direct trace quadrature and
    shrunk radially until that check passes too.
    """
    u = np.asarray(u_coeffs, dtype=float)
    if u.size != thr.J:
        raise ValueError(f"expected {thr.J} coefficients, got {u.size}")
    mats, caps = constraint_system(thr, ds, partition, alpha, grams=grams, kernels=kernels)
    res = solve_projection(u, mats, caps, solver_cfg)
    if not verify:
        return res
    for _ in range(60):
        if np.linalg.norm(res.coeffs) > 1 + 1e-9:
            ok = False
        else:
            ok, _ = check_membership(res.coeffs, thr, ds, partition, alpha)
        if ok:
            return res
        shrink = 1.0 - 1e-6
        w = res.coeffs * shrink
        res = ProjectionResult(w, float((w - u) @ (w - u)), res.iterations, res.converged,
                               res.scale * shrink)
    raise SolverError("could not certify feasibility of the projection")


def cutoff_projection(u_coeffs: np.ndarray, u_min: np.ndarray) -> np.ndarray:
    """Coefficients b = u - u_min of the localised function."""
    u = np.asarray(u_coeffs, dtype=float)
    m = np.asarray(u_min, dtype=float)
    if u.shape != m.shape:
        raise ValueError("coefficient vectors differ in length")
    return u - m
