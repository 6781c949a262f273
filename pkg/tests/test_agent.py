import numpy as np
import pytest
from scipy import stats

from conftest import TableContext
from rootflip.agent import (AdamState, DeepRFSearch, EpisodeRecord, PolicyNetwork, adam_step,
                            deeprf_slr_loop, masked_softmax, reinforce_update, run_episode,
                            sample_action)
from rootflip.errors import AllMasked, ValidationError
from rootflip.search import Evaluator

SMALL = (8, 8)


def test_masked_softmax():
    p = masked_softmax([0.0, 0.0, 0.0, 0.0], [False, True, False, False])
    np.testing.assert_allclose(p, [1 / 3, 0, 1 / 3, 1 / 3])
    p = masked_softmax([np.log(1), np.log(3)])
    np.testing.assert_allclose(p, [0.25, 0.75])
    # large logits do not overflow
    p = masked_softmax([1000.0, 1000.0])
    np.testing.assert_allclose(p, [0.5, 0.5])
    with pytest.raises(AllMasked):
        masked_softmax([1.0, 2.0], [True, True])


def test_sampling_distribution():
    probs = np.array([0.1, 0.0, 0.2, 0.3, 0.4])
    rng = np.random.default_rng(0)
    draws = np.array([sample_action(probs, rng) for _ in range(20000)])
    counts = np.bincount(draws, minlength=5)
    assert counts[1] == 0
    live = probs > 0
    _, pval = stats.chisquare(counts[live], 20000 * probs[live])
    assert pval > 1e-3


def test_network_shapes_and_init():
    net = PolicyNetwork(6, 4, hidden=(5, 5), rng=np.random.default_rng(1))
    assert net.layer_sizes == [6, 5, 5, 4]
    assert net.n_params == 6 * 5 + 5 + 5 * 5 + 5 + 5 * 4 + 4
    assert np.all(np.abs(net.weights[0]) <= 1 / np.sqrt(6))
    assert np.all(np.abs(net.weights[1]) <= 1 / np.sqrt(5))
    p = net.probabilities(np.ones(6), [False, False, True, False])
    assert p.sum() == pytest.approx(1) and p[2] == 0


def test_default_architecture():
    net = PolicyNetwork(512, 23)
    assert net.layer_sizes == [512] + [256] * 7 + [23]
    with pytest.raises(ValidationError):
        PolicyNetwork(4, 0)


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(2)
    net = PolicyNetwork(4, 3, hidden=(3, 3), rng=rng)
    states = rng.normal(size=(3, 4))
    masks = [np.array([False, False, False]), np.array([False, True, False]),
             np.array([True, True, False])]
    actions = [1, 2, 2]
    weights = [0.7, -1.3, 2.0]
    grads = net.gradients(states, masks, actions, weights)
    h = 1e-6
    for p, g in zip(net.params, grads):
        fd = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = net.loss(states, masks, actions, weights)
            p[idx] = old - h
            dn = net.loss(states, masks, actions, weights)
            p[idx] = old
            fd[idx] = (up - dn) / (2 * h)
        np.testing.assert_allclose(g, fd, atol=1e-7)


def test_adam_hand_trace():
    p = [np.array([1.0])]
    st = AdamState([np.zeros(1)], [np.zeros(1)])
    adam_step(p, [np.array([2.0])], st, lr=0.1)
    # bias-corrected moments equal g and g^2 under a constant gradient
    assert p[0][0] == pytest.approx(1 - 0.1 * 2 / (2 + 1e-8), abs=1e-12)
    adam_step(p, [np.array([2.0])], st, lr=0.1)
    assert p[0][0] == pytest.approx(0.8, abs=1e-8)
    assert st.step == 2
    assert st.m[0][0] == pytest.approx(0.9 * 0.2 + 0.1 * 2)
    assert st.v[0][0] == pytest.approx(0.999 * 0.004 + 0.001 * 4)


def test_positive_reward_raises_taken_action_probability():
    rng = np.random.default_rng(3)
    net = PolicyNetwork(4, 3, hidden=SMALL, rng=rng, learning_rate=1e-2)
    s = rng.normal(size=4)
    before = net.probabilities(s)[1]
    ep = EpisodeRecord([s], [1], [float(np.log(before))], [1.0], [(0, 1, 0)], reward=1.0)
    reinforce_update(net, ep)
    assert net.probabilities(s)[1] > before


def test_episode_flips_each_root_once():
    ctx = TableContext(5, seed=1)
    net = PolicyNetwork(8, 5, hidden=SMALL, rng=np.random.default_rng(0))
    ev = Evaluator(ctx)
    ep = run_episode(net, ev, np.random.default_rng(1), np.ones(8))
    assert sorted(ep.actions) == list(range(5))
    assert ep.patterns[-1] == (1,) * 5
    assert ev.count == 5
    assert ep.reward == pytest.approx(1 / min(ep.peaks))
    for k, pat in enumerate(ep.patterns):
        assert sum(pat) == k + 1
        assert ep.peaks[k] == ctx.table[ctx.index(pat)]
    masks = ep.masks(5)
    assert not masks[0].any() and masks[-1].sum() == 4


def test_budget_accounting_and_best():
    ctx = TableContext(5, seed=2)
    search = DeepRFSearch(ctx, 103, seed=0, hidden=SMALL)
    out = search.run()
    assert out.evaluations_used <= 103
    assert 103 - out.evaluations_used < 5 or search.ev.exhausted
    assert out.best_peak == min(s[1] for s in search.saved)
    assert out.best_peak == ctx.table[ctx.index(out.best_pattern.bits)]
    # best over everything evaluated is never worse than the reported best
    assert search.ev.best_peak <= out.best_peak


def test_budget_smaller_than_episode():
    with pytest.raises(ValidationError):
        DeepRFSearch(TableContext(5), 4, seed=0, hidden=SMALL)


def test_seed_determinism():
    ctx = TableContext(6, seed=4)
    a = deeprf_slr_loop(ctx, 200, seed=7, hidden=SMALL)
    b = deeprf_slr_loop(ctx, 200, seed=7, hidden=SMALL)
    assert a.best_pattern == b.best_pattern and a.trace == b.trace


def test_greedy_off_runs_episodes_only():
    ctx = TableContext(4, seed=5)
    out = deeprf_slr_loop(ctx, 40, seed=0, greedy=False, hidden=SMALL)
    assert out.evaluations_used == 40 and out.extra["episodes"] == 10
    assert out.method == "deeprf_no_greedy"


def test_finds_toy_optimum():
    ctx = TableContext(6, seed=6)
    out = deeprf_slr_loop(ctx, 2000, seed=0, hidden=SMALL)
    assert out.best_peak == ctx.table.min()


def test_checkpoint_resume_is_exact(tmp_path):
    ctx = TableContext(5, seed=8)
    full = DeepRFSearch(ctx, 300, seed=3, hidden=SMALL, baseline=True).run()
    part = DeepRFSearch(ctx, 300, seed=3, hidden=SMALL, baseline=True)
    part.run(max_iterations=3)
    part.save(tmp_path / "ck.npz")
    resumed = DeepRFSearch.load(tmp_path / "ck.npz", ctx)
    assert resumed.episodes == 3
    out = resumed.run()
    assert out.best_pattern == full.best_pattern
    assert out.trace == full.trace
    assert out.evaluations_used == full.evaluations_used


def test_checkpoint_rejects_other_problem(tmp_path):
    ctx = TableContext(5, seed=8)
    s = DeepRFSearch(ctx, 50, seed=0, hidden=SMALL)
    s.save(tmp_path / "ck.npz")
    with pytest.raises(ValidationError):
        DeepRFSearch.load(tmp_path / "ck.npz", TableContext(6, seed=8))
