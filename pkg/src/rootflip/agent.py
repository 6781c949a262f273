"""Policy-gradient root flipping with a greedy refinement after every episode.

The policy is a leaky-ReLU MLP mapping the current pulse amplitude to a
softmax over eligible roots. An episode flips every root exactly once in
sampled order; its reward is 1 / (smallest peak seen). After each REINFORCE
update a greedy Hamming-1 descent starts from the episode's best pattern,
and the best pattern found across the whole run is returned.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import AllMasked, NonFinite, ValidationError
from .roots import RootPattern
from .search import Evaluator, SearchOutcome, greedy_descent

LEAKY_SLOPE = 0.3
HIDDEN = (256,) * 7
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
CHECKPOINT_VERSION = 1


def _leaky(x, slope):
    return np.where(x > 0, x, slope * x)


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0


def adam_step(params, grads, state: AdamState, lr: float, beta1: float = ADAM_BETA1,
              beta2: float = ADAM_BETA2, eps: float = ADAM_EPS):
    """In-place bias-corrected Adam update of every array in ``params``."""
    state.step += 1
    c1 = 1 - beta1 ** state.step
    c2 = 1 - beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params


class PolicyNetwork:
    """Fully connected leaky-ReLU network with a masked softmax output."""

    def __init__(self, n_in: int, n_out: int, hidden=HIDDEN, rng=None,
                 learning_rate: float = 1e-4, leaky_slope: float = LEAKY_SLOPE):
        if n_out < 1:
            raise ValidationError("policy needs at least one action")
        self.layer_sizes = [int(n_in), *map(int, hidden), int(n_out)]
        self.learning_rate = learning_rate
        self.leaky_slope = leaky_slope
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weights, self.biases = [], []
        for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            bound = 1 / np.sqrt(fan_in)
            self.weights.append(rng.uniform(-bound, bound, (fan_in, fan_out)))
            self.biases.append(rng.uniform(-bound, bound, fan_out))
        self.adam = AdamState([np.zeros_like(p) for p in self.params],
                              [np.zeros_like(p) for p in self.params])

    @property
    def params(self):
        return [*self.weights, *self.biases]

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def logits(self, x):
        """Forward pass; returns (logits, pre-activations, activations)."""
        acts, pres = [np.atleast_2d(x)], []
        h = acts[0]
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            pres.append(z)
            if k < len(self.weights) - 1:
                h = _leaky(z, self.leaky_slope)
                acts.append(h)
        return pres[-1], pres, acts

    def probabilities(self, state, mask=None):
        z, _, _ = self.logits(state)
        return masked_softmax(z[0], mask)

    def gradients(self, states, masks, actions, weights):
        """Gradients of -sum_t weights[t] * log pi(actions[t] | states[t], masks[t])."""
        z, pres, acts = self.logits(np.asarray(states, dtype=float))
        probs = np.vstack([masked_softmax(zt, mt) for zt, mt in zip(z, masks)])
        delta = probs.copy()
        delta[np.arange(len(actions)), actions] -= 1
        delta *= np.asarray(weights, dtype=float)[:, None]
        gw, gb = [None] * len(self.weights), [None] * len(self.weights)
        for k in range(len(self.weights) - 1, -1, -1):
            gw[k] = acts[k].T @ delta
            gb[k] = delta.sum(axis=0)
            if k:
                delta = (delta @ self.weights[k].T) * np.where(pres[k - 1] > 0, 1.0, self.leaky_slope)
        return [*gw, *gb]

    def loss(self, states, masks, actions, weights) -> float:
        z, _, _ = self.logits(np.asarray(states, dtype=float))
        total = 0.0
        for zt, mt, a, w in zip(z, masks, actions, weights):
            total -= w * np.log(masked_softmax(zt, mt)[a])
        return float(total)


def masked_softmax(logits, mask=None):
    """Softmax with masked (True) entries at exactly zero probability."""
    z = np.asarray(logits, dtype=float)
    mask = np.zeros(z.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if mask.all():
        raise AllMasked("every action is masked")
    out = np.zeros_like(z)
    live = z[~mask]
    e = np.exp(live - live.max())
    out[~mask] = e / e.sum()
    return out


def forward(net: PolicyNetwork, state, mask=None):
    return net.probabilities(state, mask)


def sample_action(probs, rng) -> int:
    """Categorical draw by inverse CDF with one uniform from ``rng``."""
    cdf = np.cumsum(probs)
    u = rng.random() * cdf[-1]
    k = int(np.searchsorted(cdf, u, side="right"))
    k = min(k, len(probs) - 1)
    while probs[k] == 0:
        k -= 1
    return k


@dataclass
class EpisodeRecord:
    states: list
    actions: list
    log_probs: list
    peaks: list
    patterns: list
    reward: float

    def masks(self, n_root: int):
        out, mask = [], np.zeros(n_root, dtype=bool)
        for a in self.actions:
            out.append(mask.copy())
            mask[a] = True
        return out


def run_episode(net: PolicyNetwork, ev: Evaluator, rng, initial_state, state_scale: float = 1.0):
    """Flip every eligible root once, in sampled order, starting from all zeros."""
    n_root = ev.ctx.n_root
    bits = np.zeros(n_root, dtype=int)
    mask = np.zeros(n_root, dtype=bool)
    state = np.asarray(initial_state, dtype=float)
    rec = EpisodeRecord([], [], [], [], [], 0.0)
    for _ in range(n_root):
        probs = net.probabilities(state, mask)
        a = sample_action(probs, rng)
        rec.states.append(state)
        rec.actions.append(a)
        rec.log_probs.append(float(np.log(probs[a])))
        mask[a] = True
        bits[a] = 1
        amp, peak = ev.amplitude(bits)
        rec.peaks.append(peak)
        rec.patterns.append(tuple(int(b) for b in bits))
        state = amp / state_scale
    rec.reward = 1.0 / min(rec.peaks)
    return rec


def reinforce_update(net: PolicyNetwork, episode: EpisodeRecord, baseline: float = 0.0):
    """One Adam step on -(R - baseline) * sum_t log pi(a_t | s_t)."""
    adv = episode.reward - baseline
    n_root = net.layer_sizes[-1]
    grads = net.gradients(episode.states, episode.masks(n_root), episode.actions,
                          [adv] * len(episode.actions))
    if not all(np.all(np.isfinite(g)) for g in grads):
        raise NonFinite("policy gradient is not finite")
    adam_step(net.params, grads, net.adam, net.learning_rate)
    if not all(np.all(np.isfinite(p)) for p in net.params):
        raise NonFinite("policy parameters diverged; the learning rate may be too high")
    return net


class DeepRFSearch:
    """Resumable episode / update / greedy loop.

    Episodes start only when a full episode fits in the remaining budget;
    greedy descents stop as soon as the budget is spent.
    """

    def __init__(self, ctx, flip_budget: int, seed: int, greedy: bool = True,
                 learning_rate: float = 1e-4, hidden=HIDDEN, normalize_state: bool = True,
                 baseline: bool = False, memoize_greedy: bool = False):
        if flip_budget < ctx.n_root:
            raise ValidationError(f"budget {flip_budget} is smaller than one episode ({ctx.n_root})")
        self.ctx = ctx
        self.flip_budget = int(flip_budget)
        self.seed = int(seed)
        self.greedy = greedy
        self.normalize_state = normalize_state
        self.use_baseline = baseline
        self.memoize_greedy = memoize_greedy
        init_seq, sample_seq = np.random.SeedSequence(self.seed).spawn(2)
        self.rng = np.random.default_rng(sample_seq)
        # The start state is part of the problem setup and is not counted.
        self.initial_amplitude = np.asarray(ctx.amplitude(np.zeros(ctx.n_root)), dtype=float)
        self.state_scale = float(self.initial_amplitude.max()) if normalize_state else 1.0
        self.net = PolicyNetwork(self.initial_amplitude.size, ctx.n_root, hidden,
                                 np.random.default_rng(init_seq), learning_rate)
        self.ev = Evaluator(ctx, self.flip_budget)
        self.greedy_memo = {}
        self.episodes = 0
        self.reward_mean = 0.0
        self.saved = []
        self.elapsed = 0.0

    @property
    def done(self) -> bool:
        return self.flip_budget - self.ev.count < self.ctx.n_root

    def iterate(self):
        """One episode, one policy update, one greedy descent."""
        rec = run_episode(self.net, self.ev, self.rng,
                          self.initial_amplitude / self.state_scale, self.state_scale)
        baseline = self.reward_mean if self.use_baseline and self.episodes else 0.0
        reinforce_update(self.net, rec, baseline)
        self.episodes += 1
        self.reward_mean += (rec.reward - self.reward_mean) / self.episodes
        k = int(np.argmin(rec.peaks))
        bits, peak = rec.patterns[k], rec.peaks[k]
        if self.greedy and not self.ev.exhausted:
            memo = self.ev.memo
            self.ev.memo = self.greedy_memo if self.memoize_greedy else None
            bits, peak, _ = greedy_descent(self.ev, bits, peak)
            self.ev.memo = memo
        self.saved.append((self.ev.count, peak, "".join(map(str, bits))))

    def run(self, max_iterations: Optional[int] = None) -> SearchOutcome:
        t0 = time.perf_counter()
        it = 0
        while not self.done and (max_iterations is None or it < max_iterations):
            self.iterate()
            it += 1
        self.elapsed += time.perf_counter() - t0
        return self.outcome()

    def outcome(self) -> SearchOutcome:
        best = min(self.saved, key=lambda s: s[1]) if self.saved else None
        trace = list(self.ev.trace)
        if trace and trace[-1][0] != self.ev.count:
            trace.append((self.ev.count, self.ev.best_peak))
        out = SearchOutcome(RootPattern.parse(best[2]) if best else RootPattern.zeros(self.ctx.n_root),
                            best[1] if best else float("inf"), self.ev.count, trace,
                            self.elapsed, self.seed, "deeprf" if self.greedy else "deeprf_no_greedy",
                            self.ev.first_best)
        out.extra["episodes"] = self.episodes
        return out

    def save(self, path):
        """Write a checkpoint (npz: parameters and Adam moments, plus JSON state)."""
        meta = {
            "version": CHECKPOINT_VERSION,
            "layer_sizes": self.net.layer_sizes,
            "adam_step": self.net.adam.step,
            "rng": self.rng.bit_generator.state,
            "config": {"flip_budget": self.flip_budget, "seed": self.seed, "greedy": self.greedy,
                       "normalize_state": self.normalize_state, "baseline": self.use_baseline,
                       "memoize_greedy": self.memoize_greedy,
                       "learning_rate": self.net.learning_rate},
            "episodes": self.episodes,
            "reward_mean": self.reward_mean,
            "saved": self.saved,
            "elapsed": self.elapsed,
            "evaluator": {"count": self.ev.count, "best_peak": self.ev.best_peak,
                          "best_bits": self.ev.best_bits, "first_best": self.ev.first_best,
                          "trace": self.ev.trace},
            "greedy_memo": [[k, v] for k, v in self.greedy_memo.items()],
        }
        arrays = {f"p{k}": p for k, p in enumerate(self.net.params)}
        arrays.update({f"m{k}": m for k, m in enumerate(self.net.adam.m)})
        arrays.update({f"v{k}": v for k, v in enumerate(self.net.adam.v)})
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "wb") as fh:
            np.savez(fh, meta=np.array(json.dumps(meta)), **arrays)
        tmp.replace(path)

    @classmethod
    def load(cls, path, ctx) -> "DeepRFSearch":
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["meta"]))
            if meta.get("version") != CHECKPOINT_VERSION:
                raise ValidationError(f"unsupported checkpoint version {meta.get('version')}")
            cfg = meta["config"]
            hidden = meta["layer_sizes"][1:-1]
            obj = cls(ctx, cfg["flip_budget"], cfg["seed"], cfg["greedy"], cfg["learning_rate"],
                      hidden, cfg["normalize_state"], cfg["baseline"], cfg["memoize_greedy"])
            if obj.net.layer_sizes != meta["layer_sizes"]:
                raise ValidationError("checkpoint does not match this problem's layer sizes")
            n = len(obj.net.params)
            for k, p in enumerate(obj.net.params):
                p[...] = data[f"p{k}"]
            for k in range(n):
                obj.net.adam.m[k][...] = data[f"m{k}"]
                obj.net.adam.v[k][...] = data[f"v{k}"]
        obj.net.adam.step = meta["adam_step"]
        obj.rng.bit_generator.state = meta["rng"]
        obj.episodes = meta["episodes"]
        obj.reward_mean = meta["reward_mean"]
        obj.saved = [tuple(s) for s in meta["saved"]]
        obj.elapsed = meta["elapsed"]
        e = meta["evaluator"]
        obj.ev.count, obj.ev.best_peak, obj.ev.first_best = e["count"], e["best_peak"], e["first_best"]
        obj.ev.best_bits = tuple(e["best_bits"]) if e["best_bits"] is not None else None
        obj.ev.trace = [tuple(t) for t in e["trace"]]
        obj.greedy_memo = {tuple(k): v for k, v in meta["greedy_memo"]}
        return obj


def deeprf_slr_loop(ctx, flip_budget: int, seed: int, **kwargs) -> SearchOutcome:
    return DeepRFSearch(ctx, flip_budget, seed, **kwargs).run()
