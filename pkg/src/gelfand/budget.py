"""Explicit parameter budget: the unique-continuation error and the eta cascade.

Every stage is carried as a :class:`~gelfand.tower.Big` so that doubly and
triply exponential magnitudes stay representable. Float views are offered
for display; they saturate to 0 or inf and the stage is then flagged.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

from .tower import Big, log_tiers

STAGES = ("eps_star", "eps", "N", "gamma", "eps2_0", "h", "eps1", "lam_J", "J", "delta")


@dataclass(frozen=True)
class GeometryConstants:
    """Geometric bounds and the stand-ins for non-explicit constants.

    ``C_lambda`` and ``C_D`` are the constants of the two lower bounds on
    lambda_J, and ``C_N`` scales N = C_N vol(boundary) eta^(1-n). When
    ``c_n`` is None the volume of the unit n-ball is used.
    """

    n: int = 1
    T: float = math.pi
    D: float = math.pi
    K1: float = 1.0
    K2: float = 1.0
    i0: float = 1.0
    r0: float = 1.0
    vol_M: float = math.pi
    vol_boundary: float = 2.0
    C0: float = 1.0
    C0p: float = 1.0
    C3: float = 1.0
    C4: float = 1.0
    C5: float = 1.0
    c_n: float | None = None
    Lambda: float = 1.0
    L: int = 0
    C_lambda: float = 1.0
    C_D: float = 1.0
    C_N: float = 1.0

    def __post_init__(self) -> None:
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("n must be a positive integer")
        if int(self.L) != self.L or self.L < 0:
            raise ValueError("L must be a nonnegative integer")
        for f in fields(self):
            if f.name in ("n", "L"):
                continue
            v = getattr(self, f.name)
            if v is None:
                continue
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"{f.name} must be a positive finite number, got {v!r}")

    @property
    def ball_constant(self) -> float:
        if self.c_n is not None:
            return float(self.c_n)
        return math.pi ** (self.n / 2) / math.gamma(self.n / 2 + 1)

    @classmethod
    def from_dict(cls, obj: dict) -> "GeometryConstants":
        known = {f.name for f in fields(cls)}
        extra = set(obj) - known
        if extra:
            raise ValueError(f"unknown geometry constants: {sorted(extra)}")
        return cls(**obj)

    def to_dict(self) -> dict:
        return asdict(self)


def _log1p(x: Big) -> Big:
    """log(1 + x) for x >= 0, accurate for both tiny and huge x."""
    v = x.to_float()
    if v == 0.0 and x.sign == 0:
        return Big.of(0.0)
    if v == 0.0:  # below double range: log1p(x) = x to working precision
        return x
    if math.isfinite(v):
        return Big.of(math.log1p(v))
    return x.log()  # the 1 is invisible next to x


def epsilon2_big(h: Big, Lambda: Big, gamma: Big, eps1: Big, gc: GeometryConstants) -> Big:
    """Unique-continuation error as a tower number."""
    n = gc.n
    exp_factor = (h ** (-gc.C4 * n)).exp_big()
    ginv3 = gamma ** -3.0
    numer = Lambda * ginv3 + (h ** -0.5) * eps1
    denom = _log1p((h ** 1.5) * ginv3 * Lambda / eps1) ** (1.0 / 6.0)
    first = Big.of(gc.C3 ** (1.0 / 3.0)) * (h ** (-2.0 / 9.0)) * exp_factor * numer / denom
    second = Big.of(gc.C5) * Lambda * ginv3 * (h ** (1.0 / (3 * n + 3)))
    return first + second


def epsilon2(h: float, Lambda: float, gamma: float, eps1: float, gc: GeometryConstants) -> float:
    """Unique-continuation error; +inf when it exceeds double range."""
    for name, v in (("h", h), ("Lambda", Lambda), ("gamma", gamma), ("eps1", eps1)):
        if not v > 0:
            raise ValueError(f"{name} must be positive")
    if not h < 1:
        raise ValueError("h must be below 1")
    return epsilon2_big(Big.of(h), Big.of(Lambda), Big.of(gamma), Big.of(eps1), gc).to_float()


def epsilon2_log(h: float, Lambda: float, gamma: float, eps1: float, gc: GeometryConstants) -> float:
    """Natural log of :func:`epsilon2`, finite well past the float overflow point."""
    val = epsilon2_big(Big.of(h), Big.of(Lambda), Big.of(gamma), Big.of(eps1), gc)
    return val.log().to_float()


# -- individual stages -------------------------------------------------------


def eps_star_from_eta(eta: Big | float, gc: GeometryConstants) -> Big:
    return Big.of(gc.ball_constant / 2) * (_big(eta) ** float(gc.n))


def eps_from_eps_star(eps_star: Big | float, gc: GeometryConstants) -> Big:
    return _big(eps_star) / Big.of(2.0 ** (gc.L + 1) * 2 * gc.vol_M)


def partition_count(eta: Big | float, gc: GeometryConstants) -> Big:
    return Big.of(gc.C_N * gc.vol_boundary) * (_big(eta) ** float(1 - gc.n))


def gamma_from_eps(eps: Big | float, gc: GeometryConstants) -> Big:
    e = _big(eps)
    return (e * e / Big.of(32 * gc.C5 ** 2 * gc.Lambda ** 2)) ** float(gc.n + 1)


def eps2_0_from(eps: Big | float, N: Big | float) -> Big:
    e = _big(eps)
    return e * e / (Big.of(64.0) * _big(N))


def h_from(eps2_0: Big | float, gamma: Big | float, gc: GeometryConstants) -> Big:
    return (_big(eps2_0) * _big(gamma) ** 3.0 / Big.of(2 * gc.C5)) ** float(3 * gc.n + 3)


def eps1_from(h: Big, gamma: Big, eps: Big, N: Big, gc: GeometryConstants) -> Big:
    inner = (h ** (-gc.C4 * gc.n)) * 6.0
    X = (gamma ** -18.0) * (h ** -6.0) * Big.of(128.0 ** 6 * gc.C3 ** 2) * (N ** 6.0) \
        * inner.exp_big() / (eps ** 12.0)
    return (h ** 1.5) * (gamma ** -3.0) * (-X).exp_big()


def lam_J_from(gamma: Big, eps: Big, eps1: Big, gc: GeometryConstants) -> Big:
    first = Big.of(16 * gc.C_lambda ** 2) * (gamma ** -4.0) * (eps ** -4.0)
    second = Big.of(gc.C_D) * (gamma ** -24.0) * (eps1 ** -8.0)
    return second if first < second else first


def weyl_count(lam_J: Big, gc: GeometryConstants) -> Big:
    """Eigenvalue count below lambda_J from the leading Weyl term."""
    n = gc.n
    omega = math.pi ** (n / 2) / math.gamma(n / 2 + 1)
    return Big.of(omega * gc.vol_M / (2 * math.pi) ** n) * (lam_J ** (n / 2))


def delta_from(eps: Big, N: Big, h: Big, gamma: Big, eps1: Big, J: Big, lam_J: Big,
               gc: GeometryConstants) -> Big:
    """Largest delta meeting the perturbation condition, capped by 1/J."""
    blow = (h ** (-gc.C4 * gc.n)).exp_big()
    coeff = Big.of(gc.C3 ** (1.0 / 3.0) * gc.C0p) * blow * (gamma ** -3.0) / (h * eps1) \
        * J * (lam_J ** 1.5)
    d = eps * eps / (Big.of(128.0) * N * coeff)
    cap = J.reciprocal()
    return cap if cap < d else d


def _big(x: Big | float) -> Big:
    return x if isinstance(x, Big) else Big.of(float(x))


# -- the cascade -------------------------------------------------------------


@dataclass(frozen=True)
class ParameterSet:
    eta: float
    eps_star: Big
    eps: Big
    N: Big
    gamma: Big
    eps2_0: Big
    h: Big
    eps1: Big
    lam_J: Big
    J: Big
    delta: Big

    def stage(self, name: str) -> Big:
        if name not in STAGES:
            raise KeyError(name)
        return getattr(self, name)

    @property
    def underflow(self) -> tuple[str, ...]:
        """Stages whose value leaves double range (0 or inf as a float)."""
        out = []
        for name in STAGES:
            v = self.stage(name).to_float()
            if v == 0.0 or math.isinf(v):
                out.append(name)
        return tuple(out)

    @property
    def flagged(self) -> bool:
        return bool(self.underflow)

    @property
    def J_int(self) -> int | None:
        """ceil(J) when it fits in an exactly representable integer."""
        v = self.J.to_float()
        if not math.isfinite(v) or v > 2 ** 53:
            return None
        return max(1, math.ceil(v - 1e-9))

    def log_view(self, name: str) -> tuple[int, float]:
        """(tier, value): tier 1 is ln x, tier 2 is ln|ln x|, tier 3 ln ln|ln x|."""
        tier, value, _ = log_tiers(self.stage(name).log(), max_tiers=3)
        return tier + 1, value


def cascade(eta: float, gc: GeometryConstants) -> ParameterSet:
    """Run eta -> (eps, gamma, h, eps1, lambda_J, J, delta) in tower arithmetic."""
    if not 0 < eta < 1:
        raise ValueError("eta must lie in (0, 1)")
    e_star = eps_star_from_eta(eta, gc)
    eps = eps_from_eps_star(e_star, gc)
    N = partition_count(eta, gc)
    gamma = gamma_from_eps(eps, gc)
    e20 = eps2_0_from(eps, N)
    h = h_from(e20, gamma, gc)
    eps1 = eps1_from(h, gamma, eps, N, gc)
    lam_J = lam_J_from(gamma, eps, eps1, gc)
    J = weyl_count(lam_J, gc)
    delta = delta_from(eps, N, h, gamma, eps1, J, lam_J, gc)
    return ParameterSet(eta, e_star, eps, N, gamma, e20, h, eps1, lam_J, J, delta)


def stability_rhs(delta: float | Big, gc: GeometryConstants | None, C1: float, C2: float) -> float:
    """C1 (log|log delta|)^(-C2). ``gc`` is accepted for signature symmetry and unused."""
    d = _big(delta)
    if d.sign <= 0:
        raise ValueError("delta must be positive")
    if not d < Big.of(math.exp(-1.0)):
        raise ValueError("delta must be below 1/e")
    loglog = (-d.log()).log().to_float()
    return C1 * loglog ** (-C2)


# -- display -----------------------------------------------------------------


_LN10 = math.log(10.0)


def _decimal(y: Big) -> str:
    """Signed real as a float, or as +-10^(...) nested as deep as needed."""
    v = y.to_float()
    if math.isfinite(v) and (v != 0.0 or y.sign == 0):
        return format(v, ".6g")
    exponent = Big(1, y.mag).log() * (1.0 / _LN10)
    return f"{'-' if y.sign < 0 else ''}10^({_decimal(exponent)})"


def magnitude_text(x: Big) -> str:
    """Compact decimal description of a positive tower number."""
    return _decimal(x)


def log10_magnitude(x: Big) -> float:
    """log10 x, or +-inf if that itself overflows."""
    lx = x.log()
    v = lx.to_float()
    return v / _LN10 if math.isfinite(v) else math.copysign(math.inf, lx.sign)


def log10_text(x: Big) -> str:
    """log10 x as text, written as +-10^(...) once it overflows a double."""
    return _decimal(x.log() * (1.0 / _LN10))


def format_table(ps: ParameterSet) -> str:
    rows = [("stage", "value", "log10", "flag")]
    for name in STAGES:
        x = ps.stage(name)
        rows.append((name, magnitude_text(x), log10_text(x),
                     "underflow" if name in ps.underflow else ""))
    widths = [max(len(r[i]) for r in rows) for i in range(4)]
    lines = [f"eta = {ps.eta:g}"]
    for r in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
    return "\n".join(lines)
