"""Standard normal CDF and quantile, the tail quantile expansion, and the
two-sided Mills-type bracket of the upper tail."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)
_LN2PI = math.log(2.0 * math.pi)

# Acklam's rational approximation, used only as a starting point
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_P_LOW = 0.02425


def phi_cdf(x: float) -> float:
    """Standard normal distribution function."""
    return 0.5 * math.erfc(-x / _SQRT2)


def phi_sf(x: float) -> float:
    """Upper tail ``1 - Phi(x)`` without cancellation."""
    return 0.5 * math.erfc(x / _SQRT2)


def phi_pdf(x: float) -> float:
    return math.exp(-0.5 * x * x) / _SQRT2PI


def _radicand(p: float) -> float:
    big = -2.0 * math.log(p)
    return big - math.log(big) - _LN2PI


def quantile_expansion(p: float) -> float:
    """Asymptotic approximation of ``Phi^{-1}(1 - p)`` for small ``p``.

    ``sqrt(ln(1/p^2) - ln ln(1/p^2) - ln(2 pi))``; the remainder term is
    dropped, so this is an approximation whose relative error vanishes only
    as ``p -> 0`` (about 0.3% at ``p = 1e-6``).
    """
    if not (0.0 < p <= 0.1):
        raise DomainError(f"expansion defined for p in (0, 0.1], got {p!r}")
    r = _radicand(p)
    if r <= 0.0:
        raise DomainError(f"radicand {r!r} is not positive at p = {p!r}")
    return math.sqrt(r)


def _seed_lower(p: float) -> float:
    if p < _P_LOW:
        r = _radicand(p)
        if r > 0.0:
            return -math.sqrt(r)
        return -1.9
    q = p - 0.5
    r = q * q
    a, b = _A, _B
    num = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q
    den = ((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0
    return num / den


def _lower_quantile(p: float) -> float:
    # Halley iterations on Phi(x) = p, p <= 1/2, so Phi(x) is computed with
    # full relative precision
    x = _seed_lower(p)
    for _ in range(50):
        err = phi_cdf(x) - p
        u = err * _SQRT2PI * math.exp(0.5 * x * x)
        step = u / (1.0 + 0.5 * x * u)
        x -= step
        if abs(step) <= 1e-15 * max(1.0, abs(x)):
            break
    return x


def phi_quantile(p: float) -> float:
    """Inverse of :func:`phi_cdf` on (0, 1)."""
    if not (0.0 < p < 1.0):
        raise DomainError(f"quantile defined for p in (0, 1), got {p!r}")
    if p == 0.5:
        return 0.0
    if p < 0.5:
        return _lower_quantile(p)
    # 1 - p is exact for p >= 1/2
    return -_lower_quantile(1.0 - p)


@dataclass(frozen=True)
class TailSandwich:
    x: float
    lower: float
    upper: float

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper


def tail_sandwich(x: float) -> TailSandwich:
    """Bounds ``e^{-x^2/2} / (sqrt(2 pi)(1 + x)) <= 1 - Phi(x) <= e^{-x^2/2} / (sqrt(pi)(1 + x))``."""
    if not x >= 0.0:
        raise DomainError(f"tail bracket needs x >= 0, got {x!r}")
    g = math.exp(-0.5 * x * x) / (1.0 + x)
    return TailSandwich(x=x, lower=g / _SQRT2PI, upper=g / math.sqrt(math.pi))
