import json
import math

import numpy as np
import pytest

from gwcramer.branching import Trajectory, simulate_batch
from gwcramer.errors import DomainError
from gwcramer.experiments import (
    BLOCK_SIZE,
    ExperimentConfig,
    block_rng,
    coverage_experiment,
    map_blocks,
    mdp_experiment,
    mix64,
    small_pop_experiment,
    tail_ratio_experiment,
)
from gwcramer.inference import ci_single, ci_window
from gwcramer.offspring import Binary, TablePmf
from gwcramer.stats import h_batch

BIN = Binary(0.5, 0.5)


def cfg(**kw):
    base = dict(law=BIN, n=10, replicates=20_000, master_seed=2024)
    base.update(kw)
    return ExperimentConfig(**base)


class TestSeeding:
    def test_mix64_reference(self):
        # first SplitMix64 output for state 0
        assert mix64(0, 0) == 0xE220A8397B1DCDAF

    def test_mix64_spreads(self):
        seeds = {mix64(7, b) for b in range(1000)}
        assert len(seeds) == 1000
        assert all(0 <= s < 2**64 for s in seeds)

    def test_block_streams_independent_of_threads(self):
        def work(rng, size):
            return rng.integers(0, 2**32, size)

        a = np.concatenate(map_blocks(5, 3 * BLOCK_SIZE + 17, 1, work))
        b = np.concatenate(map_blocks(5, 3 * BLOCK_SIZE + 17, 4, work))
        assert np.array_equal(a, b)
        assert np.array_equal(a[:BLOCK_SIZE], block_rng(5, 0).integers(0, 2**32, BLOCK_SIZE))


class TestConfig:
    @pytest.mark.parametrize("kw", [
        dict(statistic="Q"), dict(replicates=0), dict(n=0), dict(n0=-1),
        dict(x_grid=(1.0, 0.5)), dict(x_grid=(-1.0,)), dict(a_exponent=0.5),
        dict(a_exponent=0.0), dict(kappa=1.0), dict(master_seed=2**64),
    ])
    def test_rejects(self, kw):
        with pytest.raises(DomainError):
            cfg(**kw)

    def test_echo_omits_threads(self):
        echo = cfg(threads=4).echo()
        assert "threads" not in echo
        assert echo["law"] == "binary:0.5,0.5" and echo["master_seed"] == 2024


@pytest.fixture(scope="module")
def report():
    return tail_ratio_experiment(cfg())


class TestTailRatio:
    def test_counts_monotone(self, report):
        up = [r.count for r in report.upper]
        lo = [r.count for r in report.lower]
        assert up == sorted(up, reverse=True) and lo == sorted(lo, reverse=True)

    def test_zero_row_partition(self):
        rep = tail_ratio_experiment(cfg(replicates=5000, n=3, x_grid=(0.0, 1.0)))
        h = h_batch(simulate_batch(BIN, 3, 5000, block_rng(2024, 0)), 0, 3, 1.5, 0.5)["h"]
        zeros = int(np.count_nonzero(h == 0.0))
        assert zeros > 0  # short windows hit exact cancellation often
        assert rep.row(0.0).count + rep.row(0.0, "lower").count == 5000 + zeros

    def test_center(self, report):
        r = report.row(0.0)
        assert abs(r.emp_tail - 0.5) <= 5 * math.sqrt(0.25 / 20_000)
        assert r.phi_tail == 0.5

    def test_rows_signed(self, report):
        assert all(r.x >= 0 for r in report.upper)
        assert all(r.x <= 0 for r in report.lower)
        assert math.copysign(1.0, report.lower[0].x) == -1.0

    def test_matches_direct_count(self):
        c = cfg(replicates=5000)
        rep = tail_ratio_experiment(c)
        h = h_batch(simulate_batch(BIN, 10, 5000, block_rng(2024, 0)), 0, 10, 1.5, 0.5)["h"]
        for r in rep.upper:
            assert r.count == int(np.count_nonzero(h >= r.x))

    def test_reliability_and_sentinel(self):
        rep = tail_ratio_experiment(cfg(replicates=500, x_grid=(0.0, 2.5, 8.0)))
        far = rep.row(8.0)
        assert far.count == 0 and far.ratio is None and far.log_abs_ratio is None
        assert not far.reliable and not rep.all_reliable
        assert rep.row(0.0).reliable
        line = rep.to_csv().splitlines()[3]
        assert line.startswith("8.0,0,0.0,") and line.endswith(",,,0.0,false")

    def test_csv_and_json(self, report):
        lines = report.to_csv().splitlines()
        assert lines[0] == "x,count,emp_tail,phi_tail,ratio,log_abs_ratio,mc_se,reliable"
        assert len(lines) == 1 + 2 * len(report.upper)
        payload = json.loads(report.to_json())
        assert payload["config"]["master_seed"] == 2024
        assert "tail" in payload["rows"][0]

    def test_r_statistic_runs(self):
        rep = tail_ratio_experiment(cfg(statistic="r", replicates=10_000, x_grid=(0.0, 1.0)))
        assert rep.config["statistic"] == "R"
        assert abs(rep.row(1.0).ratio - 1) < 0.2

    def test_mc_se_brackets_rerun(self):
        # differences of two independent ratios stay within 3 combined se
        inside = total = 0
        for seed in range(8):
            a = tail_ratio_experiment(cfg(replicates=40_000, master_seed=seed))
            b = tail_ratio_experiment(cfg(replicates=40_000, master_seed=seed + 100))
            for ra, rb in zip(a.rows, b.rows):
                if min(ra.count, rb.count) >= 1000:
                    total += 1
                    inside += abs(ra.ratio - rb.ratio) <= 3 * math.hypot(ra.mc_se, rb.mc_se)
        assert total >= 100
        assert inside / total >= 0.99

    def test_threads_identical(self):
        a = tail_ratio_experiment(cfg(replicates=3 * BLOCK_SIZE, threads=1))
        b = tail_ratio_experiment(cfg(replicates=3 * BLOCK_SIZE, threads=4))
        assert a.to_csv() == b.to_csv() and a.to_json() == b.to_json()


class TestMdp:
    def test_rows(self):
        rep = mdp_experiment(cfg(replicates=20_000), 1.0, [10, 20])
        assert [r.n for r in rep.rows] == [10, 20]
        for r in rep.rows:
            assert r.a_n == pytest.approx(r.n**0.25)
            assert r.threshold == pytest.approx(r.a_n)
            assert r.target == -0.5
            assert r.gap == pytest.approx(abs(r.emp_log_rate + 0.5))
        assert rep.to_csv().splitlines()[0] == "n,a_n,threshold,count,emp_log_rate,target,gap"

    def test_two_sided_counts_more(self):
        one = mdp_experiment(cfg(replicates=5000), 1.0, [10])
        two = mdp_experiment(cfg(replicates=5000), 1.0, [10], two_sided=True)
        assert two.rows[0].count > one.rows[0].count

    def test_unestimable(self):
        rep = mdp_experiment(cfg(replicates=100), 6.0, [10])
        assert rep.unestimable == [10] and rep.rows[0].gap is None

    def test_bad_x0(self):
        with pytest.raises(DomainError):
            mdp_experiment(cfg(), 0.0, [10])


class TestCoverage:
    def test_window_nominal(self):
        rep = coverage_experiment(cfg(n=15, replicates=10_000), "window")
        assert 0.93 <= rep.coverage <= 0.97
        assert rep.band_lo < rep.coverage < rep.band_hi
        assert rep.width_mode is None

    def test_wide_kappa(self):
        rep = coverage_experiment(cfg(n=15, replicates=10_000, kappa=0.5), "window")
        assert abs(rep.coverage - 0.5) < 0.03

    def test_literal_nested_in_derived(self):
        c = cfg(n=15, replicates=5000)
        d = coverage_experiment(c, "single", "derived")
        lit = coverage_experiment(c, "single", "literal")
        assert lit.hits <= d.hits
        assert lit.width_mode == "literal"

    def test_matches_scalar_intervals(self):
        c = cfg(n=6, replicates=300, master_seed=9)
        paths = simulate_batch(BIN, 7, 300, block_rng(9, 0))
        win = sum(ci_window(Trajectory(0, tuple(int(z) for z in p[:7])), 0.5, 0.05).contains(1.5)
                  for p in paths)
        single = sum(ci_single(int(p[6]), int(p[7]), 0.5, 0.05).contains(1.5) for p in paths)
        assert coverage_experiment(c, "window").hits == win
        assert coverage_experiment(c, "single").hits == single

    def test_csv(self):
        rep = coverage_experiment(cfg(replicates=100), "window")
        assert rep.to_csv().splitlines()[0] == "replicates,hits,coverage,nominal,band_lo,band_hi"


class TestSmallPop:
    def test_binary_within_bound(self):
        rep = small_pop_experiment(BIN, range(2, 8), 20_000, 3)
        assert rep.all_within
        assert rep.rows[0].n == 2
        assert abs(rep.rows[0].frequency - 0.625) < 4 * math.sqrt(0.625 * 0.375 / 20_000)

    def test_p1_zero(self):
        rep = small_pop_experiment(TablePmf(2, (0.5, 0.5)), [1, 2, 3], 1000, 3)
        for r in rep.rows:
            assert r.count == 0 and r.bound == 0.0 and r.se == 0.0 and r.within_bound

    def test_se_formula(self):
        rep = small_pop_experiment(BIN, [5], 400, 1)
        r = rep.rows[0]
        assert r.se == pytest.approx(math.sqrt(r.bound * (1 - r.bound) / 400))

    def test_bad_sweep(self):
        with pytest.raises(DomainError):
            small_pop_experiment(BIN, [0, 2], 10, 1)
