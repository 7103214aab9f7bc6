"""Independent reference computations shared by the unit and acceptance tests."""

import math

import mpmath as mp
import numpy as np

from gelfand.models import perturbation_draw


def disk_reference_lambdas(J, R=1.0):
    """Neumann eigenvalues of the disk from mpmath zeros of J_m'."""
    mp.mp.dps = 40
    roots = [mp.mpf(0)]
    for m in range(0, 20):
        for k in range(1, 12):
            z = mp.besseljzero(m, k, derivative=1)
            if z == 0:
                continue
            roots.extend([z] if m == 0 else [z, z])
    roots.sort()
    return [float((r / R) ** 2) for r in roots[:J]]


def measured_field_norm(ds_exact, ds_pert, j, dense=None):
    """sup|p| + sup|p'| + sup|p''| of the injected trace field, by dense resampling."""
    if ds_exact.n == 1:
        return float(np.abs(ds_pert.traces[j] - ds_exact.traces[j]).max())
    draw = perturbation_draw(ds_exact, ds_pert.delta, ds_pert.seed)
    s = np.linspace(0, ds_exact.perimeter, dense or 20001)
    val, der, der2 = draw.field(j, s)
    # the stored arrays must agree with the analytic field on the nodes
    v_n, d_n, dd_n = draw.field(j, ds_exact.arclength)
    assert np.allclose(ds_pert.traces[j] - ds_exact.traces[j], v_n, atol=1e-15)
    assert np.allclose(ds_pert.d1[j] - ds_exact.d1[j], d_n, atol=1e-15)
    assert np.allclose(ds_pert.d2[j] - ds_exact.d2[j], dd_n, atol=1e-15)
    return float(np.abs(val).max() + np.abs(der).max() + np.abs(der2).max())


def reference_cascade(eta, g):
    """Independent high-precision evaluation of every cascade stage."""
    with mp.workdps(50):
        n = g.n
        eta = mp.mpf(eta)
        cn = mp.pi ** (mp.mpf(n) / 2) / mp.gamma(mp.mpf(n) / 2 + 1) if g.c_n is None else mp.mpf(g.c_n)
        es = cn * eta ** n / 2
        eps = es / (2 ** (g.L + 1) * 2 * mp.mpf(g.vol_M))
        N = mp.mpf(g.C_N) * g.vol_boundary * eta ** (1 - n)
        gam = (eps ** 2 / (32 * mp.mpf(g.C5) ** 2 * mp.mpf(g.Lambda) ** 2)) ** (n + 1)
        e20 = eps ** 2 / (64 * N)
        h = (e20 * gam ** 3 / (2 * mp.mpf(g.C5))) ** (3 * n + 3)
        X = (gam ** -18 * h ** -6 * mp.mpf(128) ** 6 * N ** 6 * mp.mpf(g.C3) ** 2
             * mp.exp(6 * h ** (-mp.mpf(g.C4) * n)) / eps ** 12)
        e1 = h ** mp.mpf(1.5) * gam ** -3 * mp.exp(-X)
        lam = max(16 * mp.mpf(g.C_lambda) ** 2 * gam ** -4 * eps ** -4, mp.mpf(g.C_D) * gam ** -24 * e1 ** -8)
        J = cn * g.vol_M / (2 * mp.pi) ** n * lam ** (mp.mpf(n) / 2)
        d = eps ** 2 / (128 * N) / (mp.mpf(g.C3) ** (mp.mpf(1) / 3) * mp.exp(h ** (-mp.mpf(g.C4) * n))
                                    * gam ** -3 / (h * e1) * g.C0p * J * lam ** mp.mpf(1.5))
        d = min(d, 1 / J)
        return dict(eps_star=es, eps=eps, N=N, gamma=gam, eps2_0=e20, h=h, eps1=e1, lam_J=lam, J=J, delta=d)


PINNED = [
    (0.9, dict(n=1, C4=1e-3, C3=1e-3)),
    (0.5, dict(n=1, C4=1e-2, C5=0.5, C3=1e-6)),
    (0.95, dict(n=2, C4=1e-3, vol_M=math.pi, vol_boundary=2 * math.pi)),
    (0.8, dict(n=1, C4=1e-3, C3=1e-3)),
    (0.7, dict(n=1, C4=1e-3)),
    (0.6, dict(n=1, C4=5e-3, C3=1e-2)),
    (0.99, dict(n=1, C4=1e-2)),
    (0.9, dict(n=2, C4=1e-3, vol_M=1.0, vol_boundary=4.0)),
    (0.3, dict(n=1, C4=1e-3, L=2)),
    (0.85, dict(n=1, C4=2e-3, Lambda=2.0, C0p=1e-3)),
]


def reference_log_view(value, tier):
    with mp.workdps(50):
        x = mp.log(value)
        for _ in range(tier - 1):
            x = mp.log(abs(x))
        return x
