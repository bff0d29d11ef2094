"""Galton-Watson trajectories and generating-function procedures."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, PopulationOverflow, RequiresP1Positive
from .offspring import OffspringLaw, PoissonShifted

UINT64_MAX = 2**64 - 1
# batched paths keep Z exact in float64 for the statistics downstream
BATCH_LIMIT = 2**53
_DRAW_CHUNK = 1 << 22


@dataclass(frozen=True)
class Trajectory:
    """Observed generation sizes ``Z_{n0}, ..., Z_{n0+n}``."""

    n0: int
    values: tuple[int, ...]
    law_tag: str = ""

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(int(v) for v in self.values))
        if self.n0 < 0:
            raise DomainError(f"n0 must be nonnegative, got {self.n0}")
        if len(self.values) < 2:
            raise DomainError("a trajectory needs at least one transition")
        if min(self.values) < 1:
            raise DomainError("generation sizes must be >= 1 (p0 = 0)")
        if max(self.values) > UINT64_MAX:
            raise PopulationOverflow("generation size exceeds 64-bit range")

    @property
    def n(self) -> int:
        """Number of transitions in the window."""
        return len(self.values) - 1

    @property
    def generations(self) -> range:
        return range(self.n0, self.n0 + len(self.values))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["generation", "z"])
        for g, z in zip(self.generations, self.values):
            w.writerow([g, z])
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def from_csv(cls, text: str, law_tag: str = "") -> "Trajectory":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or [h.strip() for h in rows[0]] != ["generation", "z"]:
            raise DomainError("trajectory CSV must start with header 'generation,z'")
        body = [r for r in rows[1:] if r]
        gens = [int(r[0]) for r in body]
        if not gens or gens != list(range(gens[0], gens[0] + len(gens))):
            raise DomainError("generations must be consecutive integers")
        return cls(n0=gens[0], values=tuple(int(r[1]) for r in body), law_tag=law_tag)

    @classmethod
    def read_csv(cls, path: str | Path, law_tag: str = "") -> "Trajectory":
        return cls.from_csv(Path(path).read_text(), law_tag=law_tag)


def _next_generation(law: OffspringLaw, z: int, rng: np.random.Generator) -> int:
    total = 0
    remaining = z
    while remaining:
        size = min(remaining, _DRAW_CHUNK)
        total += int(law.sample_many(rng, size).sum())
        remaining -= size
    if total > UINT64_MAX:
        raise PopulationOverflow(f"generation size {total} exceeds 64-bit range")
    return total


def simulate(
    law: OffspringLaw,
    n0: int,
    n: int,
    rng: np.random.Generator,
    z_init: int = 1,
) -> Trajectory:
    """Simulate one process from ``Z_0 = z_init`` and record generations n0..n0+n.

    Every individual's offspring count is drawn separately, so the cost of
    a transition is linear in the current generation size.
    """
    return _run(law, n0, n, z_init, lambda z: _next_generation(law, z, rng))


def simulate_fast(
    law: PoissonShifted,
    n0: int,
    n: int,
    rng: np.random.Generator,
    z_init: int = 1,
) -> Trajectory:
    """Same law as :func:`simulate` for shifted Poisson offspring, using
    ``Z_{k+1} = Z_k + Poisson(lam Z_k)``: one draw per generation."""
    if not isinstance(law, PoissonShifted):
        raise DomainError("simulate_fast supports PoissonShifted laws only")

    def step(z: int) -> int:
        if law.lam * z > 2**62:
            raise PopulationOverflow(f"Poisson rate {law.lam * z:.3g} out of range")
        nxt = z + int(rng.poisson(law.lam * z))
        if nxt > UINT64_MAX:
            raise PopulationOverflow(f"generation size {nxt} exceeds 64-bit range")
        return nxt

    return _run(law, n0, n, z_init, step)


def _run(law, n0, n, z_init, step) -> Trajectory:
    if n < 1:
        raise DomainError(f"window needs n >= 1, got {n}")
    if n0 < 0:
        raise DomainError(f"n0 must be nonnegative, got {n0}")
    if z_init < 1:
        raise DomainError(f"z_init must be >= 1, got {z_init}")
    z = int(z_init)
    for _ in range(n0):
        z = step(z)
    values = [z]
    for _ in range(n):
        z = step(z)
        values.append(z)
    return Trajectory(n0=n0, values=tuple(values), law_tag=law.spec)


def simulate_batch(
    law: OffspringLaw,
    generations: int,
    size: int,
    rng: np.random.Generator,
    z_init: int = 1,
) -> np.ndarray:
    """``size`` independent paths ``Z_0..Z_generations`` as an int64 array.

    Each transition draws the sum of ``Z_k`` offspring counts from its
    closed-form law (binomial, negative binomial, Poisson, multinomial).
    """
    out = np.empty((size, generations + 1), dtype=np.int64)
    z = np.full(size, z_init, dtype=np.int64)
    out[:, 0] = z
    for k in range(generations):
        if size and z.max() > BATCH_LIMIT:
            raise PopulationOverflow(
                f"generation {k} reached {int(z.max())} > 2**53; reduce the horizon"
            )
        z = law.total_offspring(rng, z)
        out[:, k + 1] = z
    return out


def pgf_iterate(law: OffspringLaw, s: float, n: int) -> float:
    """``f_n(s)``, the n-fold composition of the offspring pgf (``f_0(s) = s``)."""
    if not (0.0 <= s <= 1.0):
        raise DomainError(f"s must lie in [0, 1], got {s!r}")
    if n < 0:
        raise DomainError(f"n must be >= 0, got {n}")
    if s == 1.0:
        return 1.0
    for _ in range(n):
        s = min(1.0, max(0.0, law.pgf(s)))
    return s


def small_pop_bound(law: OffspringLaw, n: int) -> float:
    """Markov bound ``s0^{-n} f_n(s0)`` on ``P(Z_n <= n)``, ``s0 = (1 + p1)/2``.

    With ``p1 = 0`` every individual has at least two children, so
    ``Z_n >= 2^n > n`` and the bound is 0.
    """
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    p1 = law.pmf(1)
    if p1 == 0.0:
        return 0.0 if 2**n > n else 1.0
    s0 = 0.5 * (1.0 + p1)
    fn = pgf_iterate(law, s0, n)
    if fn == 0.0:
        return 0.0
    return min(1.0, math.exp(math.log(fn) - n * math.log(s0)))


def q_limit_estimate(law: OffspringLaw, s: float, n_max: int) -> list[float]:
    """The sequence ``f_n(s) / p1^n`` for n = 1..n_max.

    It converges to the solution ``Q(s)`` of ``Q(f(s)) = p1 Q(s)``; no rate is
    known, so the raw sequence is returned for inspection.
    """
    p1 = law.pmf(1)
    if p1 <= 0.0:
        raise RequiresP1Positive(f"{law.spec} has p1 = 0")
    if not (0.0 <= s < 1.0):
        raise DomainError(f"s must lie in [0, 1), got {s!r}")
    out = []
    f = s
    for k in range(1, n_max + 1):
        f = law.pgf(f)
        out.append(f / p1**k)
    return out
