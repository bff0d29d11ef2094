"""Lotka-Nagaev estimators and their standardized statistics.

``m`` and ``v`` are always the true offspring mean and standard deviation;
nothing here estimates ``v`` from data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .branching import Trajectory
from .errors import DomainError, ZeroPopulation

EXACT_INT_LIMIT = 2**53


@dataclass(frozen=True)
class WindowStat:
    h_value: float
    m_hat: float
    sqrt_sum: float
    n: int
    n0: int


def _checked(values: Sequence[int]) -> None:
    if max(values) > EXACT_INT_LIMIT:
        raise DomainError("generation size above 2**53 cannot be converted exactly")


def lotka_nagaev(z_n: int, z_next: int) -> float:
    """The one-step estimator ``Z_{n+1} / Z_n``."""
    if z_n <= 0:
        raise ZeroPopulation("Z_n must be positive")
    return z_next / z_n


def r_statistic(z_n: int, z_next: int, m: float, v: float) -> float:
    """``sqrt(Z_n) (Z_{n+1}/Z_n - m) / v``."""
    if z_n <= 0:
        raise ZeroPopulation("Z_n must be positive")
    if v <= 0:
        raise DomainError(f"v must be positive, got {v}")
    _checked((z_n, z_next))
    return math.sqrt(z_n) * (z_next / z_n - m) / v


def weighted_estimator(traj: Trajectory) -> float:
    """``sum sqrt(Z_k) (Z_{k+1}/Z_k) / sum sqrt(Z_k)`` over the window."""
    z = traj.values
    _checked(z)
    roots = [math.sqrt(x) for x in z[:-1]]
    num = math.fsum(r * (b / a) for r, a, b in zip(roots, z[:-1], z[1:]))
    return num / math.fsum(roots)


def h_statistic(traj: Trajectory, m: float, v: float) -> WindowStat:
    """Standardized martingale ``(1/(v sqrt n)) sum sqrt(Z_k)(Z_{k+1}/Z_k - m)``.

    Sums are exactly rounded (``math.fsum``), so the result does not depend
    on how the window is split or ordered.
    """
    if v <= 0:
        raise DomainError(f"v must be positive, got {v}")
    z = traj.values
    _checked(z)
    n = traj.n
    roots = [math.sqrt(x) for x in z[:-1]]
    terms = [r * (b / a - m) for r, a, b in zip(roots, z[:-1], z[1:])]
    sqrt_sum = math.fsum(roots)
    m_hat = math.fsum(r * (b / a) for r, a, b in zip(roots, z[:-1], z[1:])) / sqrt_sum
    return WindowStat(
        h_value=math.fsum(terms) / (v * math.sqrt(n)),
        m_hat=m_hat,
        sqrt_sum=sqrt_sum,
        n=n,
        n0=traj.n0,
    )


def neumaier_sum(columns: np.ndarray) -> np.ndarray:
    """Compensated sum along the last axis, in a fixed left-to-right order."""
    s = np.zeros(columns.shape[:-1])
    c = np.zeros_like(s)
    for j in range(columns.shape[-1]):
        t = columns[..., j]
        tt = s + t
        c += np.where(np.abs(s) >= np.abs(t), (s - tt) + t, (t - tt) + s)
        s = tt
    return s + c


def h_batch(paths: np.ndarray, n0: int, n: int, m: float, v: float) -> dict[str, np.ndarray]:
    """Vectorized window statistics for each row of ``paths``.

    Returns arrays ``h``, ``m_hat`` and ``sqrt_sum`` for the transitions
    ``n0 .. n0+n-1``.
    """
    if paths.max(initial=0) > EXACT_INT_LIMIT:
        raise DomainError("generation size above 2**53 cannot be converted exactly")
    z = paths[:, n0 : n0 + n + 1].astype(np.float64)
    roots = np.sqrt(z[:, :-1])
    ratios = z[:, 1:] / z[:, :-1]
    sqrt_sum = neumaier_sum(roots)
    weighted = neumaier_sum(roots * ratios)
    h = neumaier_sum(roots * (ratios - m)) / (v * math.sqrt(n))
    return {"h": h, "m_hat": weighted / sqrt_sum, "sqrt_sum": sqrt_sum}


def r_batch(z_n: np.ndarray, z_next: np.ndarray, m: float, v: float) -> np.ndarray:
    zn = z_n.astype(np.float64)
    return np.sqrt(zn) * (z_next / zn - m) / v
