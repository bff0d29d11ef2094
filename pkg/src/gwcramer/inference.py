"""Confidence intervals for the offspring mean from the H and R pivots."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field

from .branching import Trajectory
from .errors import DomainError
from .gaussian import phi_quantile
from .stats import h_statistic, lotka_nagaev


class Method(str, enum.Enum):
    WINDOW = "window"
    SINGLE = "single"


class WidthMode(str, enum.Enum):
    # v q / sqrt(Z_n): inverts |R_n| <= q exactly
    DERIVED = "derived"
    # v q / Z_n: the narrower printed variant
    LITERAL = "literal"


@dataclass(frozen=True)
class ConfidenceInterval:
    lo: float
    hi: float
    level: float
    method: Method
    quantile_used: float
    width_mode: WidthMode | None = None
    # kept exactly as computed; recovering them from lo and hi loses digits
    # when the center is large compared with the width
    center: float = field(default=math.nan, compare=False)
    half_width: float = field(default=math.nan, compare=False)

    def __post_init__(self):
        if math.isnan(self.center):
            object.__setattr__(self, "center", 0.5 * (self.lo + self.hi))
        if math.isnan(self.half_width):
            object.__setattr__(self, "half_width", 0.5 * (self.hi - self.lo))

    def contains(self, m: float) -> bool:
        return self.lo <= m <= self.hi

    def to_dict(self) -> dict:
        return {
            "method": self.method.value,
            "lo": self.lo,
            "hi": self.hi,
            "level": self.level,
            "width_mode": None if self.width_mode is None else self.width_mode.value,
            "quantile_used": self.quantile_used,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _check_kappa(kappa: float) -> None:
    if not (0.0 < kappa < 1.0):
        raise DomainError(f"kappa must lie in (0, 1), got {kappa!r}")


def ci_window(traj: Trajectory, v: float, kappa: float) -> ConfidenceInterval:
    """Interval ``m_hat +- v sqrt(n) q / sum sqrt(Z_k)`` with ``q = Phi^{-1}(1 - kappa/2)``."""
    _check_kappa(kappa)
    if v <= 0:
        raise DomainError(f"v must be positive, got {v}")
    q = phi_quantile(1.0 - kappa / 2.0)
    # m only enters h_value, which is unused here
    ws = h_statistic(traj, 0.0, v)
    half = v * math.sqrt(ws.n) * q / ws.sqrt_sum
    return ConfidenceInterval(
        lo=ws.m_hat - half,
        hi=ws.m_hat + half,
        level=1.0 - kappa,
        method=Method.WINDOW,
        quantile_used=q,
        center=ws.m_hat,
        half_width=half,
    )


def ci_single(
    z_n: int,
    z_next: int,
    v: float,
    kappa: float,
    width_mode: WidthMode | str = WidthMode.DERIVED,
) -> ConfidenceInterval:
    """Interval centred at ``Z_{n+1}/Z_n``.

    The default half-width ``v q / sqrt(Z_n)`` is what inverting
    ``|R_n| <= q`` gives; ``WidthMode.LITERAL`` uses ``v q / Z_n`` instead,
    which is shorter by the factor ``sqrt(Z_n)``.
    """
    _check_kappa(kappa)
    if v <= 0:
        raise DomainError(f"v must be positive, got {v}")
    mode = WidthMode(width_mode)
    q = phi_quantile(1.0 - kappa / 2.0)
    center = lotka_nagaev(z_n, z_next)
    scale = math.sqrt(z_n) if mode is WidthMode.DERIVED else float(z_n)
    half = v * q / scale
    return ConfidenceInterval(
        lo=center - half,
        hi=center + half,
        level=1.0 - kappa,
        method=Method.SINGLE,
        quantile_used=q,
        width_mode=mode,
        center=center,
        half_width=half,
    )


@dataclass(frozen=True)
class KappaDiagnostic:
    abs_log_kappa: float
    scale: float
    ratio: float
    warn: bool
    regime: str


def validate_kappa(kappa: float, n: int, regime: str = "window", tau: float | None = None) -> KappaDiagnostic:
    """Compare ``|ln kappa|`` with ``n^(1/3)`` (window) or ``n^(2 tau)`` (single).

    The level must shrink slower than these scales for the intervals to keep
    their nominal level; at a fixed ``n`` this is only a heuristic, so a
    ratio >= 1 produces a warning, never an error.
    """
    _check_kappa(kappa)
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    if regime == "window":
        scale = n ** (1.0 / 3.0)
    elif regime == "single":
        if tau is None or not (0.0 < tau <= 1.0 / 6.0):
            raise DomainError(f"single regime needs tau in (0, 1/6], got {tau!r}")
        scale = n ** (2.0 * tau)
    else:
        raise DomainError(f"unknown regime {regime!r}")
    a = abs(math.log(kappa))
    ratio = a / scale
    return KappaDiagnostic(abs_log_kappa=a, scale=scale, ratio=ratio, warn=ratio >= 1.0, regime=regime)
