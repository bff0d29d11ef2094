"""Reproducible Monte Carlo checks of the normal-tail approximations.

Replicates are split into fixed blocks of :data:`BLOCK_SIZE`.  Block ``b``
draws from ``PCG64(mix64(master_seed, b))``, so replicate ``i`` always lives
in block ``i // BLOCK_SIZE`` at lane ``i % BLOCK_SIZE`` whatever the number of
worker threads.  Per-block results are integer tallies merged by addition,
which makes every report byte-identical across thread counts.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import binomtest

from .branching import simulate_batch, small_pop_bound
from .errors import DomainError
from .gaussian import phi_quantile, phi_sf
from .inference import Method, WidthMode
from .offspring import OffspringLaw
from .stats import h_batch, r_batch

BLOCK_SIZE = 8192
MIN_RELIABLE_COUNT = 10
_MASK64 = (1 << 64) - 1
DEFAULT_GRID = tuple(0.25 * i for i in range(11))


def mix64(master_seed: int, index: int) -> int:
    """SplitMix64 finalizer applied to ``master_seed + (index + 1) * golden``."""
    z = (master_seed + (index + 1) * 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def block_rng(master_seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(mix64(master_seed, block)))


def resolve_threads(threads: int | str | None) -> int:
    if threads in (None, "auto", 0):
        return os.cpu_count() or 1
    return max(1, int(threads))


def map_blocks(
    master_seed: int,
    replicates: int,
    threads: int | str | None,
    work: Callable[[np.random.Generator, int], object],
) -> list:
    """Run ``work(rng, size)`` for every block; results come back in block order."""
    sizes = [min(BLOCK_SIZE, replicates - start) for start in range(0, replicates, BLOCK_SIZE)]
    jobs = [(b, s) for b, s in enumerate(sizes)]
    n_threads = resolve_threads(threads)
    if n_threads == 1 or len(jobs) == 1:
        return [work(block_rng(master_seed, b), s) for b, s in jobs]
    with ThreadPoolExecutor(max_workers=n_threads) as pool:
        return list(pool.map(lambda job: work(block_rng(master_seed, job[0]), job[1]), jobs))


@dataclass
class ExperimentConfig:
    law: OffspringLaw
    statistic: str = "H"
    n0: int = 0
    n: int = 15
    replicates: int = 10_000
    x_grid: Sequence[float] = DEFAULT_GRID
    kappa: float = 0.05
    a_exponent: float = 0.25
    master_seed: int = 0
    threads: int | str = 1

    def __post_init__(self):
        self.statistic = self.statistic.upper()
        self.x_grid = tuple(float(x) for x in self.x_grid)
        if self.statistic not in ("H", "R"):
            raise DomainError(f"statistic must be H or R, got {self.statistic!r}")
        if self.replicates < 1:
            raise DomainError("need at least one replicate")
        if self.n < 1 or self.n0 < 0:
            raise DomainError(f"invalid window n0={self.n0}, n={self.n}")
        if any(x < 0 for x in self.x_grid) or list(self.x_grid) != sorted(self.x_grid):
            raise DomainError("x_grid must be nonnegative and sorted ascending")
        if not (0.0 < self.a_exponent < 0.5):
            raise DomainError(f"a_exponent must lie in (0, 1/2), got {self.a_exponent}")
        if not (0.0 < self.kappa < 1.0):
            raise DomainError(f"kappa must lie in (0, 1), got {self.kappa}")
        if not (0 <= self.master_seed <= _MASK64):
            raise DomainError("master_seed must be a 64-bit unsigned integer")

    def echo(self) -> dict:
        """Resolved configuration, without the thread count (it never affects results)."""
        return {
            "law": self.law.spec,
            "statistic": self.statistic,
            "n0": self.n0,
            "n": self.n,
            "replicates": self.replicates,
            "x_grid": list(self.x_grid),
            "kappa": self.kappa,
            "a_exponent": self.a_exponent,
            "master_seed": self.master_seed,
            "block_size": BLOCK_SIZE,
        }


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _csv(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# tail ratios


@dataclass(frozen=True)
class TailRow:
    """One tail probability estimate.

    ``x >= 0`` rows estimate ``P(T >= x)``; ``x < 0`` (and the ``-0.0`` row)
    estimate ``P(T <= x)``.  ``ratio`` is None when ``count == 0``.
    """

    x: float
    tail: str
    count: int
    emp_tail: float
    phi_tail: float
    ratio: float | None
    log_abs_ratio: float | None
    mc_se: float
    reliable: bool

    def as_row(self) -> tuple:
        return (self.x, self.count, self.emp_tail, self.phi_tail, self.ratio,
                self.log_abs_ratio, self.mc_se, self.reliable)


def _tail_row(x: float, tail: str, count: int, replicates: int) -> TailRow:
    emp = count / replicates
    phi_tail = phi_sf(abs(x))
    se = math.sqrt(emp * (1.0 - emp) / replicates) / phi_tail
    ratio = emp / phi_tail if count else None
    return TailRow(
        x=x if tail == "upper" else -x,
        tail=tail,
        count=count,
        emp_tail=emp,
        phi_tail=phi_tail,
        ratio=ratio,
        log_abs_ratio=abs(math.log(ratio)) if ratio else None,
        mc_se=se,
        reliable=count >= MIN_RELIABLE_COUNT,
    )


@dataclass
class TailRatioReport:
    config: dict
    upper: list[TailRow]
    lower: list[TailRow]
    tails_note: str
    wall_time: float = field(default=0.0, compare=False)

    CSV_HEADER = ("x", "count", "emp_tail", "phi_tail", "ratio", "log_abs_ratio", "mc_se", "reliable")

    @property
    def rows(self) -> list[TailRow]:
        return self.upper + self.lower

    def row(self, x: float, tail: str = "upper") -> TailRow:
        for r in self.upper if tail == "upper" else self.lower:
            if abs(abs(r.x) - x) < 1e-12:
                return r
        raise KeyError(x)

    @property
    def all_reliable(self) -> bool:
        return all(r.reliable for r in self.rows)

    def to_csv(self) -> str:
        return _csv(self.CSV_HEADER, [r.as_row() for r in self.rows])

    def to_json(self) -> str:
        return json.dumps(
            {
                "config": self.config,
                "tails": self.tails_note,
                "rows": [dict(zip(("tail",) + self.CSV_HEADER, (r.tail,) + r.as_row())) for r in self.rows],
            },
            indent=2,
        )


_TAILS_NOTE = {
    "H": "upper and lower tails of the window statistic both approach the normal tail",
    "R": "upper tail needs an exponential moment; lower tail only a 2+rho moment",
}


def _statistic_sample(cfg: ExperimentConfig, rng: np.random.Generator, size: int) -> np.ndarray:
    law = cfg.law
    m, v = law.mean, math.sqrt(law.variance)
    if cfg.statistic == "H":
        paths = simulate_batch(law, cfg.n0 + cfg.n, size, rng)
        return h_batch(paths, cfg.n0, cfg.n, m, v)["h"]
    g = cfg.n0 + cfg.n
    paths = simulate_batch(law, g + 1, size, rng)
    return r_batch(paths[:, g], paths[:, g + 1], m, v)


def _tally(values: np.ndarray, grid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    s = np.sort(values)
    upper = len(s) - np.searchsorted(s, grid, side="left")
    lower = np.searchsorted(s, -grid, side="right")
    return upper.astype(np.int64), lower.astype(np.int64)


def tail_ratio_experiment(cfg: ExperimentConfig) -> TailRatioReport:
    """Empirical ``P(T >= x) / (1 - Phi(x))`` and ``P(T <= -x) / Phi(-x)`` on the grid."""
    start = time.perf_counter()
    grid = np.asarray(cfg.x_grid, dtype=float)
    parts = map_blocks(
        cfg.master_seed,
        cfg.replicates,
        cfg.threads,
        lambda rng, size: _tally(_statistic_sample(cfg, rng, size), grid),
    )
    upper = sum(p[0] for p in parts)
    lower = sum(p[1] for p in parts)
    return TailRatioReport(
        config=cfg.echo(),
        upper=[_tail_row(float(x), "upper", int(c), cfg.replicates) for x, c in zip(grid, upper)],
        lower=[_tail_row(float(x), "lower", int(c), cfg.replicates) for x, c in zip(grid, lower)],
        tails_note=_TAILS_NOTE[cfg.statistic],
        wall_time=time.perf_counter() - start,
    )


# ---------------------------------------------------------------------------
# moderate deviation rate


@dataclass(frozen=True)
class MdpRow:
    n: int
    a_n: float
    threshold: float
    count: int
    emp_log_rate: float | None
    target: float
    gap: float | None


@dataclass
class MdpReport:
    config: dict
    x0: float
    two_sided: bool
    rows: list[MdpRow]
    wall_time: float = field(default=0.0, compare=False)

    CSV_HEADER = ("n", "a_n", "threshold", "count", "emp_log_rate", "target", "gap")

    @property
    def unestimable(self) -> list[int]:
        return [r.n for r in self.rows if r.count == 0]

    def to_csv(self) -> str:
        return _csv(self.CSV_HEADER, [
            (r.n, r.a_n, r.threshold, r.count, r.emp_log_rate, r.target, r.gap) for r in self.rows
        ])

    def to_json(self) -> str:
        return json.dumps(
            {
                "config": self.config,
                "x0": self.x0,
                "two_sided": self.two_sided,
                "rows": [dict(zip(self.CSV_HEADER, (r.n, r.a_n, r.threshold, r.count,
                                                    r.emp_log_rate, r.target, r.gap)))
                         for r in self.rows],
            },
            indent=2,
        )


def mdp_experiment(
    cfg: ExperimentConfig,
    x0: float,
    n_sweep: Sequence[int],
    two_sided: bool = False,
) -> MdpReport:
    """``(1/a_n^2) ln P(H / a_n >= x0)`` along ``n_sweep`` with ``a_n = n^a_exponent``.

    The limit is ``-x0^2/2``.  ``two_sided`` uses the set ``|x| >= x0``
    instead, which has the same limit.  Window size ``n`` in the sweep
    replaces ``cfg.n``; each ``n`` gets its own seed ``mix64(master_seed, n)``.
    """
    if x0 <= 0:
        raise DomainError(f"x0 must be positive, got {x0}")
    start = time.perf_counter()
    rows = []
    for n in n_sweep:
        a_n = n**cfg.a_exponent
        threshold = a_n * x0
        sub = ExperimentConfig(
            law=cfg.law, statistic="H", n0=cfg.n0, n=n, replicates=cfg.replicates,
            x_grid=(threshold,), a_exponent=cfg.a_exponent,
            master_seed=mix64(cfg.master_seed, n), threads=cfg.threads,
        )
        rep = tail_ratio_experiment(sub)
        count = rep.upper[0].count + (rep.lower[0].count if two_sided else 0)
        target = -0.5 * x0 * x0
        rate = math.log(count / cfg.replicates) / (a_n * a_n) if count else None
        rows.append(MdpRow(
            n=n, a_n=a_n, threshold=threshold, count=count, emp_log_rate=rate,
            target=target, gap=None if rate is None else abs(rate - target),
        ))
    return MdpReport(config=cfg.echo(), x0=x0, two_sided=two_sided, rows=rows,
                     wall_time=time.perf_counter() - start)


# ---------------------------------------------------------------------------
# coverage


@dataclass
class CoverageReport:
    config: dict
    method: str
    width_mode: str | None
    replicates: int
    hits: int
    nominal: float
    band_lo: float
    band_hi: float
    wall_time: float = field(default=0.0, compare=False)

    CSV_HEADER = ("replicates", "hits", "coverage", "nominal", "band_lo", "band_hi")

    @property
    def coverage(self) -> float:
        return self.hits / self.replicates

    def _values(self) -> tuple:
        return (self.replicates, self.hits, self.coverage, self.nominal, self.band_lo, self.band_hi)

    def to_csv(self) -> str:
        return _csv(self.CSV_HEADER, [self._values()])

    def to_json(self) -> str:
        return json.dumps(
            {
                "config": self.config,
                "method": self.method,
                "width_mode": self.width_mode,
                **dict(zip(self.CSV_HEADER, self._values())),
            },
            indent=2,
        )


def _coverage_hits(cfg, method, mode, q, rng, size) -> int:
    law = cfg.law
    m, v = law.mean, math.sqrt(law.variance)
    if method is Method.WINDOW:
        paths = simulate_batch(law, cfg.n0 + cfg.n, size, rng)
        w = h_batch(paths, cfg.n0, cfg.n, m, v)
        half = v * math.sqrt(cfg.n) * q / w["sqrt_sum"]
        center = w["m_hat"]
    else:
        g = cfg.n0 + cfg.n
        paths = simulate_batch(law, g + 1, size, rng)
        zn = paths[:, g].astype(np.float64)
        center = paths[:, g + 1] / zn
        half = v * q / (np.sqrt(zn) if mode is WidthMode.DERIVED else zn)
    return int(np.count_nonzero((center - half <= m) & (m <= center + half)))


def coverage_experiment(
    cfg: ExperimentConfig,
    method: Method | str = Method.WINDOW,
    width_mode: WidthMode | str = WidthMode.DERIVED,
) -> CoverageReport:
    """Fraction of replicates whose interval contains the true mean.

    The window method uses transitions ``n0 .. n0+n-1``; the single-step
    method uses the transition from generation ``n0+n``.  The band is the
    95% Wilson interval for the coverage proportion.
    """
    start = time.perf_counter()
    method = Method(method)
    mode = WidthMode(width_mode)
    q = phi_quantile(1.0 - cfg.kappa / 2.0)
    hits = sum(map_blocks(
        cfg.master_seed, cfg.replicates, cfg.threads,
        lambda rng, size: _coverage_hits(cfg, method, mode, q, rng, size),
    ))
    ci = binomtest(hits, cfg.replicates).proportion_ci(confidence_level=0.95, method="wilson")
    return CoverageReport(
        config=cfg.echo(),
        method=method.value,
        width_mode=mode.value if method is Method.SINGLE else None,
        replicates=cfg.replicates,
        hits=hits,
        nominal=1.0 - cfg.kappa,
        band_lo=float(ci.low),
        band_hi=float(ci.high),
        wall_time=time.perf_counter() - start,
    )


# ---------------------------------------------------------------------------
# small populations


@dataclass(frozen=True)
class SmallPopRow:
    n: int
    count: int
    frequency: float
    bound: float
    se: float
    within_bound: bool


@dataclass
class SmallPopReport:
    config: dict
    rows: list[SmallPopRow]
    wall_time: float = field(default=0.0, compare=False)

    CSV_HEADER = ("n", "count", "frequency", "bound", "se", "within_bound")

    @property
    def all_within(self) -> bool:
        return all(r.within_bound for r in self.rows)

    def to_csv(self) -> str:
        return _csv(self.CSV_HEADER, [
            (r.n, r.count, r.frequency, r.bound, r.se, r.within_bound) for r in self.rows
        ])

    def to_json(self) -> str:
        return json.dumps(
            {"config": self.config,
             "rows": [dict(zip(self.CSV_HEADER, (r.n, r.count, r.frequency, r.bound, r.se,
                                                 r.within_bound))) for r in self.rows]},
            indent=2,
        )


def small_pop_experiment(
    law: OffspringLaw,
    n_sweep: Sequence[int],
    replicates: int,
    master_seed: int,
    threads: int | str = 1,
) -> SmallPopReport:
    """Empirical ``P(Z_n <= n)`` next to the generating-function bound.

    A row is within bound when ``frequency <= bound + 3 sqrt(bound (1 - bound) / N)``.
    All n share the same simulated paths.
    """
    start = time.perf_counter()
    ns = np.asarray(sorted(n_sweep), dtype=np.int64)
    if len(ns) == 0 or ns[0] < 1:
        raise DomainError("n_sweep must hold integers >= 1")
    horizon = int(ns[-1])
    counts = sum(map_blocks(
        master_seed, replicates, threads,
        lambda rng, size: np.count_nonzero(simulate_batch(law, horizon, size, rng)[:, ns] <= ns, axis=0),
    ))
    rows = []
    for n, c in zip(ns.tolist(), counts.tolist()):
        bound = small_pop_bound(law, n)
        se = math.sqrt(bound * (1.0 - bound) / replicates)
        freq = c / replicates
        rows.append(SmallPopRow(n=n, count=c, frequency=freq, bound=bound, se=se,
                                within_bound=freq <= bound + 3.0 * se))
    config = {"law": law.spec, "n_sweep": ns.tolist(), "replicates": replicates,
              "master_seed": master_seed, "block_size": BLOCK_SIZE}
    return SmallPopReport(config=config, rows=rows, wall_time=time.perf_counter() - start)
