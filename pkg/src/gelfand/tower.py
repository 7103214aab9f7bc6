"""Real numbers stored as towers of exponentials.

A positive magnitude is kept either as a plain float or as
``exp(s1 * exp(s2 * ... exp(top)))`` with signs ``s_i`` in {-1, +1}. This
is enough to carry doubly and triply exponential quantities (say
exp(-exp(exp(1000)))) through products, powers, sums and logarithms with
ordinary float accuracy in the top level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

# magnitudes whose log exceeds this are lifted one level
LIFT = 700.0


@dataclass(frozen=True)
class Magnitude:
    """Positive number: ``top`` when ``signs`` is empty, else exp(signs[0] * Magnitude(signs[1:], top))."""

    signs: tuple[int, ...]
    top: float

    @property
    def depth(self) -> int:
        return len(self.signs)

    def inner(self) -> "Magnitude":
        return Magnitude(self.signs[1:], self.top)

    def log(self) -> "Big":
        if not self.signs:
            return Big.of(math.log(self.top))
        return Big(self.signs[0], self.inner())

    def to_float(self) -> float:
        if not self.signs:
            return self.top
        exponent = self.signs[0] * self.inner().to_float()
        if exponent > 709.0:
            return math.inf
        if exponent < -745.0:
            return 0.0
        return math.exp(exponent)

    def __repr__(self) -> str:
        return f"Magnitude({self.signs}, {self.top!r})"


def _exp_of(sign: int, mag: Magnitude) -> Magnitude:
    """exp(sign * mag), normalised so that lifted levels really need lifting."""
    if not mag.signs and mag.top <= LIFT:
        return Magnitude((), math.exp(sign * mag.top))
    return Magnitude((sign,) + mag.signs, mag.top)


@dataclass(frozen=True)
class Big:
    """Signed real: sign in {-1, 0, +1} times a magnitude."""

    sign: int
    mag: Magnitude

    @staticmethod
    def of(x: float) -> "Big":
        if math.isnan(x) or math.isinf(x):
            raise OverflowError("cannot lift a non-finite float")
        if x == 0:
            return Big(0, Magnitude((), 0.0))
        return Big(1 if x > 0 else -1, Magnitude((), abs(x)))

    @property
    def is_zero(self) -> bool:
        return self.sign == 0

    def to_float(self) -> float:
        return 0.0 if self.sign == 0 else self.sign * self.mag.to_float()

    # -- comparisons --------------------------------------------------------

    def abs_cmp(self, other: "Big") -> int:
        """Sign of |self| - |other|."""
        if self.sign == 0 or other.sign == 0:
            return (self.sign != 0) - (other.sign != 0)
        a, b = self.mag, other.mag
        if not a.signs and not b.signs:
            return (a.top > b.top) - (a.top < b.top)
        return a.log().cmp(b.log())

    def cmp(self, other: "Big") -> int:
        if self.sign != other.sign:
            return (self.sign > other.sign) - (self.sign < other.sign)
        return self.sign * self.abs_cmp(other) if self.sign else 0

    def __lt__(self, other: "Big") -> bool:
        return self.cmp(other) < 0

    # -- arithmetic ---------------------------------------------------------

    def __neg__(self) -> "Big":
        return Big(-self.sign, self.mag)

    def __add__(self, other: "Big | float") -> "Big":
        other = _as_big(other)
        if self.sign == 0:
            return other
        if other.sign == 0:
            return self
        if not self.mag.signs and not other.mag.signs:
            s = self.to_float() + other.to_float()
            if math.isfinite(s):
                return Big.of(s)
        big, small = (self, other) if self.abs_cmp(other) >= 0 else (other, self)
        # |small| / |big| = exp(ln|small| - ln|big|) <= 1
        diff = small.mag.log() - big.mag.log()
        ratio = diff.exp_float()
        if big.sign == small.sign:
            log_mag = big.mag.log() + math.log1p(ratio)
        else:
            if ratio >= 1.0:
                return Big.of(0.0)
            log_mag = big.mag.log() + math.log1p(-ratio)
        return Big(big.sign, log_mag.exp())

    __radd__ = __add__

    def __sub__(self, other: "Big | float") -> "Big":
        return self + (-_as_big(other))

    def __rsub__(self, other: "Big | float") -> "Big":
        return _as_big(other) - self

    def __mul__(self, other: "Big | float") -> "Big":
        other = _as_big(other)
        if self.sign == 0 or other.sign == 0:
            return Big.of(0.0)
        if not self.mag.signs and not other.mag.signs:
            p = self.to_float() * other.to_float()
            if math.isfinite(p) and p != 0.0:
                return Big.of(p)
        log_mag = self.mag.log() + other.mag.log()
        return Big(self.sign * other.sign, log_mag.exp())

    __rmul__ = __mul__

    def __truediv__(self, other: "Big | float") -> "Big":
        other = _as_big(other)
        if other.sign == 0:
            raise ZeroDivisionError("division by zero")
        return self * other.reciprocal()

    def __rtruediv__(self, other: "Big | float") -> "Big":
        return _as_big(other) * self.reciprocal()

    def reciprocal(self) -> "Big":
        if self.sign == 0:
            raise ZeroDivisionError("reciprocal of zero")
        return Big(self.sign, (-self.mag.log()).exp())

    def __pow__(self, p: float) -> "Big":
        if self.sign < 0:
            raise ValueError("real powers need a positive base")
        if self.sign == 0:
            return Big.of(0.0) if p > 0 else Big.of(1.0)
        return Big(1, (self.mag.log() * float(p)).exp())

    def log(self) -> "Big":
        if self.sign <= 0:
            raise ValueError("logarithm of a nonpositive number")
        return self.mag.log()

    def exp(self) -> Magnitude:
        """exp(self) as a positive magnitude."""
        if self.sign == 0:
            return Magnitude((), 1.0)
        return _exp_of(self.sign, self.mag)

    def exp_big(self) -> "Big":
        return Big(1, self.exp())

    def exp_float(self) -> float:
        return self.exp().to_float()

    def __repr__(self) -> str:
        return f"Big({self.sign}, {self.mag!r})"


def _as_big(x: "Big | float") -> Big:
    return x if isinstance(x, Big) else Big.of(float(x))


def ln(x: Big) -> Big:
    return x.log()


def exp(x: Big) -> Big:
    return x.exp_big()


def log_tiers(x: Big, max_tiers: int = 4) -> tuple[int, float, int]:
    """Shallowest (tier, value, sign) with a finite float value.

    tier 0 holds x itself and tier k holds ln of the magnitude at tier k-1,
    so tier 2 of a positive x is ln|ln x|. ``sign`` is the sign of the
    number at the previous tier (+1 at tier 0).
    """
    cur, sign = x, 1
    for tier in range(max_tiers + 1):
        val = cur.to_float()
        if math.isfinite(val) and (val != 0.0 or cur.sign == 0):
            return tier, val, sign
        sign = cur.sign
        cur = Big(1, cur.mag).log()
    raise OverflowError("value exceeds the supported tower height")
