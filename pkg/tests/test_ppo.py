import math
from dataclasses import replace

import numpy as np
import pytest

from evaluation import Bounds, ConfigError
from ppo import (
    Adam,
    Gradient,
    PolicyParams,
    PpoConfig,
    TrajectoryBatch,
    clipped_objective,
    effective_logits,
    logprob_and_entropy,
    normalize_rewards,
    ppo_loss,
    run_ppo,
    sample_action,
    slot_probabilities,
    update,
)
from surrogate import CoreObjective, benchmark_objective

TUNED = dict(ncores=8, n_steps=4, lr=0.05, epochs=4, minibatch=32, ent_coef=0.0)


def _ragged_params(rng):
    bounds = Bounds.from_cardinalities([3, 2, 4])
    base = PolicyParams.uniform(bounds)
    logits = np.where(base.mask, rng.normal(size=base.logits.shape), 0.0)
    return PolicyParams(logits, base.mask, 0.3, np.array([0.2, -0.1, 0.4])), bounds


def _batch(params, bounds, rng, n=12, incumbent=None):
    actions = np.stack([rng.integers(0, bounds.cardinalities) for _ in range(n)])
    logp = np.array([logprob_and_entropy(params, a, incumbent)[0] for a in actions])
    old = logp + rng.normal(scale=0.3, size=n)
    return TrajectoryBatch(actions, old, rng.normal(size=n), incumbent)


def test_uniform_policy_entropy():
    params = PolicyParams.uniform(Bounds.uniform(52, 0, 23))
    _, entropy = logprob_and_entropy(params, np.zeros(52, dtype=int))

    assert entropy == pytest.approx(52 * math.log(24))
    assert entropy == pytest.approx(165.26, abs=0.01)


def test_padding_gets_no_probability():
    params, _ = _ragged_params(np.random.default_rng(0))
    probs = slot_probabilities(params)

    assert probs.sum(axis=1) == pytest.approx([1.0, 1.0, 1.0])
    assert np.all(probs[~params.mask] == 0.0)


def test_sample_action_follows_slot_probabilities():
    mask = np.array([[True, True, False]])
    params = PolicyParams(np.array([[0.0, math.log(3), 0.0]]), mask, 0.0, np.zeros(1))
    rng = np.random.default_rng(4)
    draws = [sample_action(params, rng) for _ in range(4000)]

    ones = sum(int(a[0]) for a, _ in draws)
    assert ones / 4000 == pytest.approx(0.75, abs=0.03)
    assert all(int(a[0]) in (0, 1) for a, _ in draws)
    a, logp = draws[0]
    assert logp[0] == pytest.approx(math.log(0.25) if a[0] == 0 else math.log(0.75))


def test_incumbent_bias_raises_the_incumbent_logit():
    params, _ = _ragged_params(np.random.default_rng(1))
    z = effective_logits(params, np.array([2, 0, 3]))

    assert z[0, 2] == pytest.approx(params.logits[0, 2] + 0.2)
    assert z[1, 0] == pytest.approx(params.logits[1, 0] - 0.1)
    assert z[0, 0] == params.logits[0, 0]
    assert z[1, 2] == -np.inf


def test_clipped_objective_examples():
    assert clipped_objective(np.array([1.5]), np.array([2.0]), 0.2)[0] == pytest.approx(2.4)
    assert clipped_objective(np.array([0.5]), np.array([-2.0]), 0.2)[0] == pytest.approx(-1.6)
    assert clipped_objective(np.array([1.1]), np.array([2.0]), 0.2)[0] == pytest.approx(2.2)


def _random_case(rng):
    cards = rng.integers(2, 6, size=int(rng.integers(1, 5)))
    bounds = Bounds.from_cardinalities(cards)
    base = PolicyParams.uniform(bounds)
    logits = np.where(base.mask, rng.uniform(-3.0, 3.0, size=base.logits.shape), 0.0)
    params = PolicyParams(logits, base.mask, float(rng.uniform(-1, 1)), rng.uniform(-1, 1, size=bounds.dim))
    incumbent = rng.integers(0, cards) if rng.random() < 0.5 else None
    n = 16
    actions = np.stack([rng.integers(0, cards) for _ in range(n)])
    logp = np.array([logprob_and_entropy(params, a, incumbent)[0] for a in actions])
    old = logp + rng.normal(scale=0.3, size=n)
    batch = TrajectoryBatch(actions, old, rng.normal(size=n), incumbent, float(rng.uniform(-1, 1)))
    return params, batch


def _nudged(params, kind, index, delta):
    if kind == "logits":
        logits = params.logits.copy()
        logits[index] += delta
        return replace(params, logits=logits)
    if kind == "bias":
        bias = params.bias.copy()
        bias[index] += delta
        return replace(params, bias=bias)
    return replace(params, value=params.value + delta)


@pytest.mark.parametrize("case", range(20))
def test_gradient_matches_finite_differences(case):
    rng = np.random.default_rng(100 + case)
    params, batch = _random_case(rng)
    cfg = PpoConfig(ent_coef=0.05, vf_coef=0.5)
    _, grad = ppo_loss(batch, params, cfg)

    entries = [("logits", (int(k), int(j)), grad.logits[k, j]) for k, j in zip(*np.nonzero(params.mask))]
    entries += [("bias", k, grad.bias[k]) for k in range(params.dim)]
    entries.append(("value", None, grad.value))
    h = 1e-5
    for kind, index, analytic in entries:
        numeric = (
            ppo_loss(batch, _nudged(params, kind, index, h), cfg)[0]
            - ppo_loss(batch, _nudged(params, kind, index, -h), cfg)[0]
        ) / (2 * h)
        assert abs(analytic - numeric) <= 1e-4 * max(abs(analytic), abs(numeric), 1e-3), (kind, index)
    assert np.all(grad.logits[~params.mask] == 0.0)
    if batch.incumbent is None:
        assert np.all(grad.bias == 0.0)


def test_value_gradient_ignores_the_surrogate():
    rng = np.random.default_rng(3)
    params, bounds = _ragged_params(rng)
    batch = _batch(params, bounds, rng)
    cfg = PpoConfig()

    _, grad = ppo_loss(batch, params, cfg)

    assert grad.value == pytest.approx(float(np.mean(2 * cfg.vf_coef * (params.value - batch.rewards))))


def test_unit_ratio_gradient_is_the_plain_policy_gradient():
    rng = np.random.default_rng(9)
    params, bounds = _ragged_params(rng)
    n = 24
    actions = np.stack([rng.integers(0, bounds.cardinalities) for _ in range(n)])
    logp = np.array([logprob_and_entropy(params, a)[0] for a in actions])
    rewards = rng.normal(scale=2.0, size=n)
    batch = TrajectoryBatch(actions, logp, rewards, None, params.value)

    _, grad = ppo_loss(batch, params, PpoConfig(ent_coef=0.0))

    p = slot_probabilities(params)
    expected = np.zeros_like(params.logits)
    for action, adv in zip(actions, rewards - params.value):
        onehot = np.zeros_like(params.logits)
        onehot[np.arange(params.dim), action] = 1.0
        expected -= adv * (onehot - p) / n
    expected = np.where(params.mask, expected, 0.0)
    assert grad.logits == pytest.approx(expected, abs=1e-12)


def _collect(params, rng, n, reward):
    draws = [sample_action(params, rng) for _ in range(n)]
    actions = np.stack([a for a, _ in draws])
    logp = np.array([slot_logp.sum() for _, slot_logp in draws])
    return TrajectoryBatch(actions, logp, reward(actions), None, params.value)


def test_two_arm_bandit_learns_the_paying_arm():
    params = PolicyParams.uniform(Bounds.from_cardinalities([2]))
    cfg = PpoConfig(lr=0.05, epochs=4, minibatch=32, ent_coef=0.0)
    adam = Adam(cfg.lr)
    rng = np.random.default_rng(0)

    for _ in range(200):
        batch = _collect(params, rng, 32, lambda a: (a[:, 0] == 0).astype(float))
        params = update(params, batch, cfg, rng, adam)
        if slot_probabilities(params)[0, 0] >= 0.99:
            break

    assert slot_probabilities(params)[0, 0] >= 0.99


def test_entropy_bonus_keeps_the_policy_near_uniform():
    bounds = Bounds.from_cardinalities([3, 4, 5])
    rng = np.random.default_rng(12)
    base = PolicyParams.uniform(bounds)
    params = replace(base, logits=np.where(base.mask, rng.uniform(-0.5, 0.5, size=base.logits.shape), 0.0))
    cfg = PpoConfig(lr=0.02, epochs=4, minibatch=32, ent_coef=1.0)
    adam = Adam(cfg.lr)

    for _ in range(100):
        batch = _collect(params, rng, 32, lambda a: np.zeros(len(a)))
        params = update(params, batch, cfg, rng, adam)

    _, entropy = logprob_and_entropy(params, np.zeros(3, dtype=int))
    assert entropy >= 0.99 * math.log(3 * 4 * 5)


def test_zero_learning_rate_leaves_params_unchanged():
    rng = np.random.default_rng(5)
    params, bounds = _ragged_params(rng)
    batch = _batch(params, bounds, rng, n=20)

    after = update(params, batch, PpoConfig(lr=0.0, minibatch=8), rng)

    assert np.array_equal(after.logits, params.logits)
    assert after.value == params.value


def test_adam_first_step_moves_each_entry_by_lr():
    params, _ = _ragged_params(np.random.default_rng(2))
    grad = np.where(params.mask, 1.0, 0.0)

    after = Adam(0.1).step(params, Gradient(grad, -2.0, np.zeros(3)))

    moved = (params.logits - after.logits)[params.mask]
    assert moved == pytest.approx(np.full(moved.size, 0.1), abs=1e-6)
    assert after.value == pytest.approx(params.value + 0.1, abs=1e-6)


def test_normalize_rewards():
    r = normalize_rewards(np.array([1.0, 2.0, 3.0]))

    assert r.mean() == pytest.approx(0.0)
    assert r.std() == pytest.approx(1.0, abs=1e-6)
    assert list(normalize_rewards(np.array([4.0]))) == [0.0]


@pytest.mark.parametrize("kwargs", [{"ncores": 0}, {"clip_eps": 1.0}, {"epochs": 0}, {"lr": -1.0}, {"beta2": 1.0}])
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        PpoConfig(**kwargs)


def test_run_counts_updates_and_workers():
    obj = benchmark_objective("neg_sphere", 4, (-3, 3))
    result = run_ppo(obj, PpoConfig(max_samples=640, **TUNED), seed=1)

    assert len(result.records) == 640
    assert result.diagnostics["updates"] == 20
    assert {r.worker for r in result.records} == set(range(8))
    assert len(result.diagnostics["entropies"]) == 20


def test_run_is_reproducible():
    obj = benchmark_objective("neg_sphere", 4, (-3, 3))
    cfg = PpoConfig(max_samples=256, **TUNED)

    a, b = run_ppo(obj, cfg, seed=6), run_ppo(obj, cfg, seed=6)

    assert [r.vector for r in a.records] == [r.vector for r in b.records]


def test_bandit_policy_concentrates_on_the_best_arm():
    obj = benchmark_objective("neg_sphere", 1, (0, 9), target=7.0)
    result = run_ppo(obj, PpoConfig(max_samples=2000, **TUNED), seed=0)
    early = np.mean([r.objective for r in result.records[:100]])
    late = np.mean([r.objective for r in result.records[-100:]])
    entropies = result.diagnostics["entropies"]

    assert result.best_objective == 0.0
    assert late > early + 5.0
    assert entropies[-1] < entropies[0]


def test_incumbent_conditioning_runs_on_toy4(toy4):
    cfg = PpoConfig(max_samples=256, incumbent_conditioning=True, **TUNED)
    result = run_ppo(CoreObjective(toy4), cfg, seed=2)

    assert len(result.records) == 256
    assert all(toy4.bounds.contains(r.vector) for r in result.records)
