"""Exhaustive, Monte-Carlo and greedy searches over root patterns.

Every objective evaluation counts as one, whichever strategy makes it, so
traces from different searches share the same x-axis. A context is any
object with ``n_root`` and ``peak(bits) -> float``; :class:`FlipContext`
is the real one.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import TooLarge, ValidationError
from .pulse import _atomic_write, duration_for_peak
from .roots import RootPattern

EXHAUSTIVE_CAP = 20
MC_CHUNK = 1024


@dataclass
class SearchOutcome:
    best_pattern: RootPattern
    best_peak: float
    evaluations_used: int
    trace: list
    wall_time_s: float = 0.0
    seed: Optional[int] = None
    method: str = ""
    # evaluation index at which best_peak was first seen
    first_best_evaluation: int = 0
    extra: dict = field(default_factory=dict)

    def to_dict(self, duration_ms: Optional[float] = None) -> dict:
        out = {
            "method": self.method,
            "pattern": str(self.best_pattern),
            "peak_rad": self.best_peak,
            "evaluations": self.evaluations_used,
            "first_best_evaluation": self.first_best_evaluation,
            "seed": self.seed,
            "wall_time_s": self.wall_time_s,
        }
        if duration_ms is not None:
            out["duration_ms"] = duration_ms
        out.update(self.extra)
        return out


class Evaluator:
    """Counts objective calls and keeps the running best and its trace.

    With ``memoize`` a repeated pattern is served from the cache and is not
    counted, since no transform is run for it.
    """

    def __init__(self, ctx, budget: Optional[int] = None, memoize: bool = False):
        self.ctx = ctx
        self.budget = budget
        self.memo = {} if memoize else None
        self.count = 0
        self.best_peak = np.inf
        self.best_bits = None
        self.first_best = 0
        self.trace = []

    @property
    def exhausted(self) -> bool:
        return self.budget is not None and self.count >= self.budget

    def __call__(self, bits) -> float:
        key = tuple(int(b) for b in bits)
        if self.memo is not None and key in self.memo:
            return self.memo[key]
        return self._record(key, float(self.ctx.peak(np.asarray(key, dtype=float))))

    def amplitude(self, bits):
        """Evaluate and also return the pulse amplitude (always counted)."""
        key = tuple(int(b) for b in bits)
        amp = np.asarray(self.ctx.amplitude(np.asarray(key, dtype=float)))
        return amp, self._record(key, float(np.max(amp)))

    def _record(self, key, peak: float) -> float:
        self.count += 1
        if self.memo is not None:
            self.memo[key] = peak
        if peak < self.best_peak:
            self.best_peak, self.best_bits, self.first_best = peak, key, self.count
            self.trace.append((self.count, peak))
        return peak

    def outcome(self, method: str, start_time: float, seed=None) -> SearchOutcome:
        trace = list(self.trace)
        if trace and trace[-1][0] != self.count:
            trace.append((self.count, self.best_peak))
        return SearchOutcome(RootPattern(self.best_bits), self.best_peak, self.count, trace,
                             time.perf_counter() - start_time, seed, method, self.first_best)


def index_to_bits(index: int, n: int) -> tuple:
    """Pattern with bit 0 as the most significant bit of ``index``."""
    return tuple((index >> (n - 1 - k)) & 1 for k in range(n))


def exhaustive_search(ctx, cap: int = EXHAUSTIVE_CAP, reverse: bool = False) -> SearchOutcome:
    n = ctx.n_root
    if n > cap:
        raise TooLarge(f"2^{n} patterns exceeds the exhaustive cap of 2^{cap}")
    start = time.perf_counter()
    ev = Evaluator(ctx)
    order = range(2 ** n - 1, -1, -1) if reverse else range(2 ** n)
    for i in order:
        ev(index_to_bits(i, n))
    return ev.outcome("exhaustive", start)


def monte_carlo_search(ctx, budget: int, seed: int, target_peak: Optional[float] = None,
                       tol: float = 1e-12) -> SearchOutcome:
    """Uniform random patterns with no memory of earlier draws.

    ``budget = 0`` evaluates the all-zero (minimum-phase) pattern once so
    the outcome is always defined. ``target_peak`` stops the run early
    once a pattern at or below it is found.
    """
    if budget < 0:
        raise ValidationError("budget must be nonnegative")
    start = time.perf_counter()
    n = ctx.n_root
    ev = Evaluator(ctx)
    if budget == 0:
        ev((0,) * n)
        return ev.outcome("monte_carlo", start, seed)
    rng = np.random.default_rng(seed)
    done = False
    while not done and ev.count < budget:
        draws = rng.integers(0, 2, size=(MC_CHUNK, n))
        for bits in draws[: budget - ev.count]:
            peak = ev(bits)
            if target_peak is not None and peak <= target_peak + tol:
                done = True
                break
    return ev.outcome("monte_carlo", start, seed)


def greedy_descent(ev: Evaluator, start_bits, start_peak: float):
    """Best-improvement Hamming-1 descent driven by an existing evaluator.

    Returns (bits, peak, per-layer best peaks).
    """
    cur = list(int(b) for b in start_bits)
    cur_peak = start_peak
    layers = []
    while not ev.exhausted:
        best_k, best_peak = None, cur_peak
        for k in range(len(cur)):
            if ev.exhausted:
                break
            cur[k] ^= 1
            peak = ev(cur)
            cur[k] ^= 1
            if peak < best_peak:
                best_k, best_peak = k, peak
        if best_k is None:
            break
        cur[best_k] ^= 1
        cur_peak = best_peak
        layers.append(best_peak)
    return tuple(cur), cur_peak, layers


def greedy_tree_search(start: RootPattern, ctx, budget_remaining: Optional[int] = None,
                       start_peak: Optional[float] = None, memoize: bool = False) -> SearchOutcome:
    """Layered best-improvement search from ``start``.

    Each layer flips every bit of the current pattern once; the strictly
    best neighbour (lowest index on ties) becomes the next start. If
    ``start_peak`` is not given the start pattern is evaluated and counted.
    """
    t0 = time.perf_counter()
    if len(start) != ctx.n_root:
        raise ValidationError(f"start has {len(start)} bits, expected {ctx.n_root}")
    ev = Evaluator(ctx, budget_remaining, memoize)
    if start_peak is None:
        start_peak = ev(start.bits)
    else:
        ev.best_peak, ev.best_bits = float(start_peak), tuple(start.bits)
    bits, peak, layers = greedy_descent(ev, start.bits, float(start_peak))
    out = ev.outcome("greedy", t0)
    out.best_pattern, out.best_peak = RootPattern(bits), peak
    out.extra["layer_peaks"] = layers
    return out


def write_trace_csv(path, trace, n_points: int, peak_constraint_gauss: float, gamma: float):
    lines = ["evaluation,best_peak_rad,best_duration_ms"]
    for k, peak in trace:
        dur = duration_for_peak(peak, n_points, peak_constraint_gauss, gamma)
        lines.append(f"{k},{peak:.17g},{dur:.17g}")
    _atomic_write(Path(path), "\n".join(lines) + "\n")


def write_outcome_json(path, payload: dict):
    _atomic_write(Path(path), json.dumps(payload, indent=2, sort_keys=True) + "\n")
