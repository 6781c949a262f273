import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import TableContext
from rootflip.errors import TooLarge, ValidationError
from rootflip.pulse import duration_for_peak
from rootflip.roots import RootPattern
from rootflip.search import (Evaluator, exhaustive_search, greedy_tree_search, index_to_bits,
                             monte_carlo_search, write_outcome_json, write_trace_csv)


class Wide:
    n_root = 21

    def peak(self, bits):
        return 1.0


class Dict3:
    """Three-bit objective given as an explicit table."""

    n_root = 3

    def __init__(self, table):
        self.table = table
        self.calls = 0

    def peak(self, bits):
        self.calls += 1
        return self.table["".join(str(int(b)) for b in bits)]


def test_index_to_bits():
    assert index_to_bits(0, 3) == (0, 0, 0)
    assert index_to_bits(1, 3) == (0, 0, 1)
    assert index_to_bits(6, 3) == (1, 1, 0)


def test_exhaustive_finds_table_minimum(toy4):
    out = exhaustive_search(toy4)
    assert out.evaluations_used == 16 and toy4.calls == 16
    assert out.best_peak == toy4.table.min()
    assert toy4.index(out.best_pattern.bits) == int(np.argmin(toy4.table))
    rev = exhaustive_search(toy4, reverse=True)
    assert rev.best_pattern == out.best_pattern
    assert rev.first_best_evaluation == 16 - out.first_best_evaluation + 1


def test_exhaustive_cap():
    with pytest.raises(TooLarge):
        exhaustive_search(Wide())


def test_trace_monotone(toy4):
    out = exhaustive_search(toy4)
    ks = [k for k, _ in out.trace]
    peaks = [p for _, p in out.trace]
    assert ks == sorted(ks) and ks[-1] == 16
    assert all(a >= b for a, b in zip(peaks, peaks[1:]))
    assert peaks[-1] == out.best_peak


def test_mc_replays_its_draws(toy4):
    out = monte_carlo_search(toy4, budget=50, seed=9)
    assert out.evaluations_used == 50 and toy4.calls == 50
    draws = np.random.default_rng(9).integers(0, 2, size=(1024, 4))[:50]
    expected = min(toy4.table[toy4.index(d)] for d in draws)
    assert out.best_peak == expected


def test_mc_seed_determinism(toy4):
    a = monte_carlo_search(toy4, budget=30, seed=1)
    b = monte_carlo_search(toy4, budget=30, seed=1)
    assert a.best_pattern == b.best_pattern and a.trace == b.trace


def test_mc_budget_zero(toy4):
    out = monte_carlo_search(toy4, budget=0, seed=0)
    assert out.evaluations_used == 1
    assert out.best_pattern == RootPattern.zeros(4)
    with pytest.raises(ValidationError):
        monte_carlo_search(toy4, budget=-1, seed=0)


def test_mc_target_stops_early(toy4):
    out = monte_carlo_search(toy4, budget=10_000, seed=0, target_peak=toy4.table.min())
    assert out.best_peak == toy4.table.min()
    assert out.evaluations_used < 10_000
    assert out.evaluations_used == out.first_best_evaluation


def test_mc_spans_chunks(toy4):
    out = monte_carlo_search(toy4, budget=2500, seed=4)
    assert out.evaluations_used == 2500


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 1000), st.integers(1, 200))
def test_mc_budget_exact(seed, budget):
    ctx = TableContext(5, seed=seed)
    out = monte_carlo_search(ctx, budget=budget, seed=seed)
    assert out.evaluations_used == budget == ctx.calls
    assert out.best_peak >= ctx.table.min()


def test_greedy_hand_path():
    # 000 -> 010 (best neighbour) -> 011 -> stop
    table = {"000": 5, "100": 4, "010": 3, "001": 4.5,
             "110": 3.5, "011": 1, "101": 9, "111": 2}
    ctx = Dict3(table)
    out = greedy_tree_search(RootPattern.zeros(3), ctx)
    assert str(out.best_pattern) == "011" and out.best_peak == 1
    assert out.extra["layer_peaks"] == [3, 1]
    # start + three layers of three neighbours
    assert out.evaluations_used == 1 + 3 + 3 + 3


def test_greedy_ties_pick_lowest_index():
    table = {k: 5.0 for k in ("000", "100", "010", "001", "110", "011", "101", "111")}
    table["100"] = table["001"] = 1.0
    out = greedy_tree_search(RootPattern.zeros(3), Dict3(table), start_peak=5.0)
    assert str(out.best_pattern) == "100"


def test_greedy_budget_stops_mid_layer():
    table = {"000": 5, "100": 4, "010": 3, "001": 4.5,
             "110": 3.5, "011": 1, "101": 9, "111": 2}
    ctx = Dict3(table)
    out = greedy_tree_search(RootPattern.zeros(3), ctx, budget_remaining=2, start_peak=5)
    assert ctx.calls == 2
    assert str(out.best_pattern) == "010" and out.best_peak == 3


def test_greedy_start_length_checked(toy4):
    with pytest.raises(ValidationError):
        greedy_tree_search(RootPattern.zeros(3), toy4)


def test_greedy_local_minimum(toy4):
    out = greedy_tree_search(RootPattern.zeros(4), toy4)
    bits = list(out.best_pattern.bits)
    for k in range(4):
        bits[k] ^= 1
        assert toy4.table[toy4.index(bits)] >= out.best_peak
        bits[k] ^= 1


def test_evaluator_memo(toy4):
    ev = Evaluator(toy4, memoize=True)
    ev((0, 1, 0, 1))
    ev((0, 1, 0, 1))
    assert ev.count == 1 and toy4.calls == 1
    ev2 = Evaluator(toy4, budget=2)
    ev2((0, 0, 0, 0))
    assert not ev2.exhausted
    ev2((0, 0, 0, 0))
    assert ev2.exhausted and ev2.count == 2


def test_writers(tmp_path, toy4):
    out = exhaustive_search(toy4)
    write_trace_csv(tmp_path / "t.csv", out.trace, 512, 0.2, 4257.6)
    rows = (tmp_path / "t.csv").read_text().splitlines()
    assert rows[0] == "evaluation,best_peak_rad,best_duration_ms"
    k, peak, dur = rows[-1].split(",")
    assert int(k) == 16
    assert float(dur) == pytest.approx(duration_for_peak(float(peak), 512, 0.2))
    write_outcome_json(tmp_path / "o.json", out.to_dict(duration_ms=1.5))
    data = json.loads((tmp_path / "o.json").read_text())
    assert data["pattern"] == str(out.best_pattern) and data["duration_ms"] == 1.5


def test_duration_formula():
    # 0.2 G at 4257.6 Hz/G: a pi-radian sample lasts 1/(2 * 851.52) s
    dwell = np.pi / (2 * np.pi * 4257.6 * 0.2)
    assert duration_for_peak(np.pi, 512, 0.2) == pytest.approx(512 * dwell * 1e3)


def test_nb3_exhaustive_optimum(nb3_ctx):
    out = exhaustive_search(nb3_ctx)
    assert out.evaluations_used == 512
    assert str(out.best_pattern) == "011011111"
    assert duration_for_peak(out.best_peak, 512, 0.2) == pytest.approx(10.58, abs=0.01)
