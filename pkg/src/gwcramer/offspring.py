"""Offspring laws with p0 = 0, their moments, and moment-condition checkers.

Four law families are supported, all with support in {1, 2, 3, ...}:

* :class:`Binary` -- support {1, 2};
* :class:`GeometricShifted` -- ``p_k = (1 - q) q^(k-1)``;
* :class:`PoissonShifted` -- ``1 + Poisson(lam)``;
* :class:`TablePmf` -- an explicit finite table starting at ``kmin``.

Series over infinite supports are truncated by a ratio rule: summation stops
at the first term ``t_j`` whose successor ratio ``r = t_{j+1}/t_j`` is below 1,
not larger than the previous ratio, and leaves a geometric tail bound
``t_j r / (1 - r)`` under ``1e-12`` of the partial sum.  At most ``10**6`` terms
are summed; hitting the cap raises :class:`NonConvergent`.

The checkers (:func:`check_bernstein`, :func:`check_cramer_mgf`,
:func:`check_linnik`, :func:`moment_2_rho`) evaluate the hypotheses of the
moderate-deviation results.  The Bernstein condition quantifies over every
order ``l >= 2``; the checker only scans ``2..scan_limit``.  A sub-Gaussian
upper tail implies the Bernstein condition for some large constant, so no
separate sub-Gaussian checker exists: run :func:`check_bernstein` instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable

import numpy as np
from scipy.special import gammaln

from .errors import InvalidLaw, NonConvergent, UnboundedSupport

SERIES_RTOL = 1e-12
SERIES_MAX_TERMS = 10**6
_CHUNK = 4096
# consecutive non-shrinking, non-decaying ratios that count as divergence
DIVERGENCE_WINDOW = 1000


class OffspringLaw:
    """Common interface of the offspring law variants.

    Subclasses expose ``kmin``, the smallest support point (always >= 1).
    """

    @property
    def support_max(self) -> int | None:
        """Largest point of the support, or None when unbounded."""
        raise NotImplementedError

    @property
    def mean(self) -> float:
        raise NotImplementedError

    @property
    def variance(self) -> float:
        raise NotImplementedError

    @property
    def spec(self) -> str:
        """Law in the ``family:params`` mini-grammar accepted by :func:`parse_law`."""
        raise NotImplementedError

    def log_pmf(self, k: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def pmf(self, k: int) -> float:
        if k < self.kmin or (self.support_max is not None and k > self.support_max):
            return 0.0
        return float(np.exp(self.log_pmf(np.array([k]))[0]))

    def pgf(self, s: float) -> float:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator) -> int:
        return int(self.sample_many(rng, 1)[0])

    def sample_many(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw ``size`` i.i.d. offspring counts (int64)."""
        raise NotImplementedError

    def total_offspring(self, rng: np.random.Generator, z: np.ndarray) -> np.ndarray:
        """Sum of ``z[i]`` i.i.d. offspring counts, for every entry of ``z``.

        Uses the closed-form law of the sum, so cost does not grow with ``z``.
        """
        raise NotImplementedError

    def __str__(self) -> str:
        return self.spec


def _check_prob(name: str, p: float) -> None:
    if not (0.0 <= p <= 1.0) or math.isnan(p):
        raise InvalidLaw(f"{name} must lie in [0, 1], got {p!r}")


@dataclass(frozen=True)
class Binary(OffspringLaw):
    kmin = 1

    p1: float
    p2: float

    def __post_init__(self):
        _check_prob("p1", self.p1)
        _check_prob("p2", self.p2)
        if abs(self.p1 + self.p2 - 1.0) > 1e-12:
            raise InvalidLaw(f"p1 + p2 must equal 1, got {self.p1 + self.p2!r}")
        if self.p1 == 0.0 or self.p2 == 0.0:
            raise InvalidLaw("point-mass law has zero variance")

    @property
    def support_max(self):
        return 2

    @property
    def mean(self):
        return self.p1 + 2.0 * self.p2

    @property
    def variance(self):
        return self.p1 * self.p2

    @property
    def spec(self):
        return f"binary:{self.p1!r},{self.p2!r}"

    def log_pmf(self, k):
        k = np.asarray(k)
        with np.errstate(divide="ignore"):
            return np.where(k == 1, np.log(self.p1), np.where(k == 2, np.log(self.p2), -np.inf))

    def pmf(self, k):
        return {1: self.p1, 2: self.p2}.get(k, 0.0)

    def pgf(self, s):
        return self.p1 * s + self.p2 * s * s

    def sample_many(self, rng, size):
        return 1 + (rng.random(size) < self.p2).astype(np.int64)

    def total_offspring(self, rng, z):
        return z + rng.binomial(z, self.p2)


@dataclass(frozen=True)
class GeometricShifted(OffspringLaw):
    kmin = 1

    q: float

    def __post_init__(self):
        if not (0.0 < self.q < 1.0):
            raise InvalidLaw(f"q must lie in (0, 1), got {self.q!r}")

    @property
    def support_max(self):
        return None

    @property
    def mean(self):
        return 1.0 / (1.0 - self.q)

    @property
    def variance(self):
        return self.q / (1.0 - self.q) ** 2

    @property
    def spec(self):
        return f"geom:{self.q!r}"

    def log_pmf(self, k):
        k = np.asarray(k, dtype=float)
        return np.where(k >= 1, math.log1p(-self.q) + (k - 1) * math.log(self.q), -np.inf)

    def pmf(self, k):
        return (1.0 - self.q) * self.q ** (k - 1) if k >= 1 else 0.0

    def pgf(self, s):
        return (1.0 - self.q) * s / (1.0 - self.q * s)

    def sample_many(self, rng, size):
        # inversion: P(X > k) = q^k
        u = 1.0 - rng.random(size)
        return 1 + np.floor(np.log(u) / math.log(self.q)).astype(np.int64)

    def total_offspring(self, rng, z):
        # sum of z shifted geometrics = z + failures before the z-th success
        return z + rng.negative_binomial(z, 1.0 - self.q)


@dataclass(frozen=True)
class PoissonShifted(OffspringLaw):
    kmin = 1

    lam: float

    def __post_init__(self):
        if not (self.lam > 0.0) or math.isinf(self.lam):
            raise InvalidLaw(f"lambda must be positive and finite, got {self.lam!r}")

    @property
    def support_max(self):
        return None

    @property
    def mean(self):
        return 1.0 + self.lam

    @property
    def variance(self):
        return self.lam

    @property
    def spec(self):
        return f"poisson1:{self.lam!r}"

    def log_pmf(self, k):
        k = np.asarray(k, dtype=float)
        j = np.maximum(k - 1, 0)
        return np.where(k >= 1, -self.lam + j * math.log(self.lam) - gammaln(j + 1), -np.inf)

    def pgf(self, s):
        return s * math.exp(self.lam * (s - 1.0))

    def sample_many(self, rng, size):
        return 1 + rng.poisson(self.lam, size).astype(np.int64)

    def total_offspring(self, rng, z):
        return z + rng.poisson(self.lam * z).astype(np.int64)


@dataclass(frozen=True)
class TablePmf(OffspringLaw):
    kmin: int
    probs: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))
        if int(self.kmin) != self.kmin or self.kmin < 1:
            raise InvalidLaw(f"kmin must be a positive integer (p0 = 0), got {self.kmin!r}")
        if not self.probs:
            raise InvalidLaw("empty probability table")
        for i, p in enumerate(self.probs):
            _check_prob(f"probs[{i}]", p)
        total = math.fsum(self.probs)
        if abs(total - 1.0) > 1e-12:
            raise InvalidLaw(f"probabilities sum to {total!r}, not 1")
        if self.variance <= 0.0:
            raise InvalidLaw("point-mass law has zero variance")

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.kmin, self.kmin + len(self.probs), dtype=np.int64)

    @property
    def support_max(self):
        return self.kmin + len(self.probs) - 1

    @property
    def mean(self):
        return math.fsum(k * p for k, p in zip(self.support.tolist(), self.probs))

    @property
    def variance(self):
        m = self.mean
        return math.fsum((k - m) ** 2 * p for k, p in zip(self.support.tolist(), self.probs))

    @property
    def spec(self):
        return f"table:{self.kmin}:" + ",".join(repr(p) for p in self.probs)

    def log_pmf(self, k):
        k = np.asarray(k, dtype=np.int64)
        idx = k - self.kmin
        inside = (idx >= 0) & (idx < len(self.probs))
        p = np.asarray(self.probs)[np.clip(idx, 0, len(self.probs) - 1)]
        with np.errstate(divide="ignore"):
            return np.where(inside, np.log(p), -np.inf)

    def pmf(self, k):
        i = k - self.kmin
        return self.probs[i] if 0 <= i < len(self.probs) else 0.0

    def pgf(self, s):
        return math.fsum(p * s**k for k, p in zip(self.support.tolist(), self.probs))

    @cached_property
    def _alias(self) -> tuple[np.ndarray, np.ndarray]:
        return build_alias_table(self.probs)

    def sample_many(self, rng, size):
        prob, alias = self._alias
        i = rng.integers(0, len(prob), size)
        keep = rng.random(size) < prob[i]
        return self.kmin + np.where(keep, i, alias[i]).astype(np.int64)

    def total_offspring(self, rng, z):
        counts = rng.multinomial(z, np.asarray(self.probs))
        return counts @ self.support


def build_alias_table(probs: Iterable[float]) -> tuple[np.ndarray, np.ndarray]:
    """Vose's alias table for a finite pmf.

    Returns ``(prob, alias)``: draw a uniform column ``i``, keep it with
    probability ``prob[i]``, otherwise take ``alias[i]``.
    """
    p = np.asarray(list(probs), dtype=float)
    n = len(p)
    scaled = p * n / p.sum()
    prob = np.ones(n)
    alias = np.arange(n)
    small = [i for i in range(n) if scaled[i] < 1.0]
    large = [i for i in range(n) if scaled[i] >= 1.0]
    while small and large:
        s = small.pop()
        g = large.pop()
        prob[s] = scaled[s]
        alias[s] = g
        scaled[g] = (scaled[g] + scaled[s]) - 1.0
        (small if scaled[g] < 1.0 else large).append(g)
    # leftovers are 1 up to rounding
    for i in small + large:
        prob[i] = 1.0
        alias[i] = i
    return prob, alias


def parse_law(text: str) -> OffspringLaw:
    """Parse ``binary:p1,p2``, ``geom:q``, ``poisson1:lambda`` or ``table:kmin:p,...``.

    Probability lists must sum to 1 within 1e-9; tables are renormalized
    after that check.
    """
    family, _, rest = text.strip().partition(":")
    try:
        if family == "binary":
            p1, p2 = (float(x) for x in rest.split(","))
            _check_sum([p1, p2])
            return Binary(p1 / (p1 + p2), p2 / (p1 + p2))
        if family == "geom":
            return GeometricShifted(float(rest))
        if family == "poisson1":
            return PoissonShifted(float(rest))
        if family == "table":
            kmin, _, plist = rest.partition(":")
            probs = [float(x) for x in plist.split(",")]
            _check_sum(probs)
            total = math.fsum(probs)
            return TablePmf(int(kmin), tuple(p / total for p in probs))
    except InvalidLaw:
        raise
    except ValueError as exc:
        raise InvalidLaw(f"cannot parse law {text!r}: {exc}") from None
    raise InvalidLaw(f"unknown law family in {text!r}")


def _check_sum(probs: list[float]) -> None:
    total = math.fsum(probs)
    if abs(total - 1.0) > 1e-9:
        raise InvalidLaw(f"probabilities sum to {total!r}, not 1")


# ---------------------------------------------------------------------------
# moments


def mean(law: OffspringLaw) -> float:
    return law.mean


def variance(law: OffspringLaw) -> float:
    return law.variance


def pmf(law: OffspringLaw, k: int) -> float:
    return law.pmf(k)


def sample(law: OffspringLaw, rng: np.random.Generator) -> int:
    return law.sample(rng)


def expect(
    law: OffspringLaw,
    log_g: Callable[[np.ndarray], np.ndarray],
    *,
    detect_divergence: bool = False,
) -> float:
    """E g(Z1) for ``g > 0`` given as ``log g``, under the truncation rule.

    With ``detect_divergence`` a run of :data:`DIVERGENCE_WINDOW` ratios that
    are all >= 1 and never shrink returns ``inf`` instead of running to the cap.
    """
    if law.support_max is not None:
        k = np.arange(law.kmin, law.support_max + 1)
        logt = law.log_pmf(k) + log_g(k)
        return math.fsum(np.exp(logt[np.isfinite(logt)]).tolist())

    accepted: list[float] = []
    partial = 0.0
    prev_ratio = math.inf
    growing = 0
    start = law.kmin
    while start - law.kmin < SERIES_MAX_TERMS:
        k = np.arange(start, start + _CHUNK + 1)
        logt = law.log_pmf(k) + log_g(k)
        with np.errstate(over="ignore"):
            terms = np.exp(logt)
            ratios = np.exp(np.diff(logt))
        for j in range(_CHUNK):
            t, r = terms[j], ratios[j]
            if not math.isfinite(t):
                return math.inf
            accepted.append(t)
            partial += t
            if len(accepted) >= SERIES_MAX_TERMS:
                break
            if t == 0.0 or r == 0.0 or math.isnan(r):
                # zero of g (e.g. |k - m|^l at k = m): no ratio information
                prev_ratio = math.inf
                growing = 0
                continue
            if r < 1.0 and r <= prev_ratio and t * r / (1.0 - r) < SERIES_RTOL * partial:
                return math.fsum(accepted)
            if detect_divergence:
                growing = growing + 1 if (r >= 1.0 and r >= prev_ratio * (1.0 - 1e-12)) else 0
                if growing >= DIVERGENCE_WINDOW:
                    return math.inf
            prev_ratio = r
        start += _CHUNK
    raise NonConvergent(
        f"series for {law.spec} not converged after {SERIES_MAX_TERMS} terms"
    )


def abs_central_moment(law: OffspringLaw, l: int) -> float:
    """E|Z1 - m|^l."""
    if l < 2:
        raise ValueError(f"order must be >= 2, got {l}")
    if l == 2:
        return law.variance
    m = law.mean
    with np.errstate(divide="ignore"):
        return expect(law, lambda k: l * np.log(np.abs(k - m)))


def moment_2_rho(law: OffspringLaw, rho: float) -> float:
    """E Z1^(2 + rho) for rho in (0, 1]."""
    if not (0.0 < rho <= 1.0):
        raise ValueError(f"rho must lie in (0, 1], got {rho}")
    return expect(law, lambda k: (2.0 + rho) * np.log(k))


# ---------------------------------------------------------------------------
# condition checkers


@dataclass
class ConditionReport:
    condition_name: str
    parameters: dict[str, float]
    passed: bool
    per_order: list[tuple[int, float, float]] = field(default_factory=list)
    value: float | None = None
    diverged: bool = False
    scan_limit: int | None = None
    note: str = ""

    def to_dict(self) -> dict:
        value = self.value
        if value is not None and math.isinf(value):
            value = "inf"
        return {
            "condition": self.condition_name,
            "parameters": self.parameters,
            "passed": self.passed,
            "per_order": [list(row) for row in self.per_order],
            "value": value,
            "diverged": self.diverged,
            "scan_limit": self.scan_limit,
            "note": self.note,
        }


def bernstein_rhs(l: int, c: float, v2: float) -> float:
    """(1/2) l! (l-1)^(-l/2) c^(l-2) v^2."""
    return math.exp(
        math.lgamma(l + 1) - 0.5 * l * math.log(l - 1) + (l - 2) * math.log(c) + math.log(0.5 * v2)
    )


def check_bernstein(law: OffspringLaw, c: float, scan_limit: int = 30) -> ConditionReport:
    """Scan the Bernstein-type moment bound over orders 2..scan_limit."""
    if c <= 0:
        raise ValueError(f"c must be positive, got {c}")
    if scan_limit < 2:
        raise ValueError(f"scan_limit must be >= 2, got {scan_limit}")
    v2 = law.variance
    rows = []
    for l in range(2, scan_limit + 1):
        lhs = abs_central_moment(law, l)
        rhs = v2 if l == 2 else bernstein_rhs(l, c, v2)
        rows.append((l, lhs, rhs))
    return ConditionReport(
        condition_name="Bernstein",
        parameters={"c": c},
        passed=all(lhs <= rhs for _, lhs, rhs in rows),
        per_order=rows,
        scan_limit=scan_limit,
        note="bound required for every l >= 2; only l <= scan_limit checked",
    )


def bernstein_constant_bounded(law: OffspringLaw) -> float:
    """Bernstein constant (1/3) 2^(3/2) max(m, c2) for Z1 <= m + c2."""
    if law.support_max is None:
        raise UnboundedSupport(f"{law.spec} has unbounded support")
    m = law.mean
    c2 = law.support_max - m
    return 2.0**1.5 / 3.0 * max(m, c2)


def check_cramer_mgf(law: OffspringLaw, kappa0: float) -> ConditionReport:
    """Finiteness of E exp(kappa0 Z1)."""
    if kappa0 <= 0:
        raise ValueError(f"kappa0 must be positive, got {kappa0}")
    if isinstance(law, GeometricShifted):
        ratio = law.q * math.exp(kappa0)
        if ratio >= 1.0:
            value = math.inf
        else:
            value = (1.0 - law.q) * math.exp(kappa0) / (1.0 - ratio)
    else:
        value = expect(law, lambda k: kappa0 * k, detect_divergence=True)
    return ConditionReport(
        condition_name="CramerMGF",
        parameters={"kappa0": kappa0},
        passed=math.isfinite(value),
        value=value,
        diverged=not math.isfinite(value),
    )


def linnik_exponent(tau: float) -> float:
    return 4.0 * tau / (2.0 * tau + 1.0)


def check_linnik(law: OffspringLaw, iota0: float, tau: float) -> ConditionReport:
    """Finiteness of E exp(iota0 Z1^(4 tau / (2 tau + 1)))."""
    if iota0 <= 0:
        raise ValueError(f"iota0 must be positive, got {iota0}")
    if not (0.0 < tau <= 1.0 / 6.0):
        raise ValueError(f"tau must lie in (0, 1/6], got {tau}")
    e = linnik_exponent(tau)
    value = expect(law, lambda k: iota0 * np.power(k, e), detect_divergence=True)
    return ConditionReport(
        condition_name="Linnik",
        parameters={"iota0": iota0, "tau": tau, "exponent": e},
        passed=math.isfinite(value),
        value=value,
        diverged=not math.isfinite(value),
    )


def check_moment_2_rho(law: OffspringLaw, rho: float) -> ConditionReport:
    value = moment_2_rho(law, rho)
    return ConditionReport(
        condition_name="Moment2Rho",
        parameters={"rho": rho},
        passed=math.isfinite(value),
        value=value,
    )
