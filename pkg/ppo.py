"""Clipped-surrogate policy optimization as a contextual bandit.

The policy is a table of per-slot logits (padded to the widest slot and
masked) plus a scalar value baseline.  One action is a whole decision
vector; its reward is the objective.  Gradients are analytic and the
parameters move with Adam.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import logsumexp

from evaluation import (
    Bounds,
    ConfigError,
    Evaluator,
    Objective,
    OptimizerResult,
    samples_before_convergence,
    spawn_streams,
)

logger = logging.getLogger(__name__)

NORM_EPS = 1e-8


@dataclass(frozen=True)
class PpoConfig:
    ncores: int = 32
    n_steps: int = 8
    clip_eps: float = 0.2
    vf_coef: float = 0.5
    ent_coef: float = 0.001
    lr: float = 3e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epochs: int = 4
    minibatch: int = 64
    reward_norm: bool = True
    incumbent_conditioning: bool = False
    max_samples: int = 20_000

    def __post_init__(self) -> None:
        if self.ncores < 1 or self.n_steps < 1:
            raise ConfigError("ppo: ncores and n_steps must be >= 1")
        if not 0.0 < self.clip_eps < 1.0:
            raise ConfigError("ppo: clip_eps must lie in (0, 1)")
        if self.epochs < 1 or self.minibatch < 1:
            raise ConfigError("ppo: epochs and minibatch must be >= 1")
        if self.lr < 0 or self.vf_coef < 0 or self.ent_coef < 0:
            raise ConfigError("ppo: lr, vf_coef and ent_coef must be >= 0")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError("ppo: Adam betas must lie in [0, 1)")
        if self.max_samples < 1:
            raise ConfigError("ppo: max_samples must be >= 1")

    @property
    def batch_size(self) -> int:
        return self.ncores * self.n_steps


@dataclass(frozen=True)
class PolicyParams:
    """Logits are (slots, widest choice list); entries outside ``mask`` are padding."""

    logits: np.ndarray
    mask: np.ndarray
    value: float = 0.0
    bias: np.ndarray | None = None

    @classmethod
    def uniform(cls, bounds: Bounds) -> PolicyParams:
        cards = bounds.cardinalities
        width = int(cards.max()) if cards.size else 1
        mask = np.arange(width)[None, :] < cards[:, None]
        return cls(np.zeros(mask.shape), mask, 0.0, np.zeros(bounds.dim))

    @property
    def dim(self) -> int:
        return self.logits.shape[0]


@dataclass(frozen=True)
class TrajectoryBatch:
    """Actions are choice indices (vector minus lower bounds).

    ``baseline`` is the value estimate of the snapshot that collected the batch;
    advantages are measured against it, so the value parameter only enters the
    loss through the regression term.
    """

    actions: np.ndarray
    old_logp: np.ndarray
    rewards: np.ndarray
    incumbent: np.ndarray | None = None
    baseline: float = 0.0

    def __len__(self) -> int:
        return int(self.rewards.size)

    def take(self, idx: np.ndarray) -> TrajectoryBatch:
        return replace(self, actions=self.actions[idx], old_logp=self.old_logp[idx], rewards=self.rewards[idx])


def effective_logits(params: PolicyParams, incumbent: np.ndarray | None = None) -> np.ndarray:
    z = params.logits
    if incumbent is not None and params.bias is not None:
        z = z.copy()
        z[np.arange(params.dim), incumbent] += params.bias
    return np.where(params.mask, z, -np.inf)


def log_softmax(z: np.ndarray) -> np.ndarray:
    return z - logsumexp(z, axis=-1, keepdims=True)


def slot_probabilities(params: PolicyParams, incumbent: np.ndarray | None = None) -> np.ndarray:
    return np.exp(log_softmax(effective_logits(params, incumbent)))


def _entropy(logp: np.ndarray) -> float:
    p = np.exp(logp)
    terms = np.where(p > 0, p * np.where(np.isfinite(logp), logp, 0.0), 0.0)
    return float(-terms.sum())


def sample_action(
    params: PolicyParams, rng: np.random.Generator, incumbent: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Independent categorical draw per slot; returns (choice indices, per-slot log-probs)."""
    logp = log_softmax(effective_logits(params, incumbent))
    cdf = np.cumsum(np.exp(logp), axis=1)
    u = rng.random(params.dim)
    action = (cdf < (u * cdf[:, -1])[:, None]).sum(axis=1)
    action = np.minimum(action, params.mask.sum(axis=1) - 1)
    return action, logp[np.arange(params.dim), action]


def logprob_and_entropy(
    params: PolicyParams, action: np.ndarray, incumbent: np.ndarray | None = None
) -> tuple[float, float]:
    logp = log_softmax(effective_logits(params, incumbent))
    return float(logp[np.arange(params.dim), action].sum()), _entropy(logp)


def clipped_objective(ratio: np.ndarray, adv: np.ndarray, eps: float) -> np.ndarray:
    clipped = np.where(adv >= 0, (1.0 + eps) * adv, (1.0 - eps) * adv)
    return np.minimum(ratio * adv, clipped)


@dataclass(frozen=True)
class Gradient:
    logits: np.ndarray
    value: float
    bias: np.ndarray


def ppo_loss(batch: TrajectoryBatch, params: PolicyParams, cfg: PpoConfig) -> tuple[float, Gradient]:
    """Loss to minimise and its analytic gradient."""
    n = len(batch)
    rows = np.arange(params.dim)
    logp = log_softmax(effective_logits(params, batch.incumbent))
    p = np.exp(logp)
    safe_logp = np.where(params.mask, logp, 0.0)

    new_logp = safe_logp[rows[None, :], batch.actions].sum(axis=1)
    ratio = np.exp(new_logp - batch.old_logp)
    adv = batch.rewards - batch.baseline
    surrogate = clipped_objective(ratio, adv, cfg.clip_eps)
    entropy = _entropy(logp)
    loss = -surrogate.mean() + cfg.vf_coef * np.mean((params.value - batch.rewards) ** 2) - cfg.ent_coef * entropy

    # only samples where the unclipped term is the minimum carry policy gradient
    active = ratio * adv <= clipped_objective(ratio, adv, cfg.clip_eps)
    weights = np.where(active, ratio * adv, 0.0) / n
    grad = np.zeros_like(params.logits)
    for k in range(params.dim):
        np.add.at(grad[k], batch.actions[:, k], -weights)
    grad += weights.sum() * p

    slot_h = -(p * safe_logp).sum(axis=1, keepdims=True)
    grad += cfg.ent_coef * p * (safe_logp + slot_h)
    grad = np.where(params.mask, grad, 0.0)

    grad_value = float(np.mean(2.0 * cfg.vf_coef * (params.value - batch.rewards)))
    grad_bias = np.zeros(params.dim)
    if batch.incumbent is not None:
        grad_bias = grad[rows, batch.incumbent].copy()
    return float(loss), Gradient(grad, grad_value, grad_bias)


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m: list[np.ndarray] | None = None
        self._v: list[np.ndarray] | None = None

    def step(self, params: PolicyParams, grad: Gradient) -> PolicyParams:
        grads = [grad.logits, np.array([grad.value]), grad.bias]
        if self._m is None:
            self._m = [np.zeros_like(g) for g in grads]
            self._v = [np.zeros_like(g) for g in grads]
        self.t += 1
        steps = []
        for i, g in enumerate(grads):
            self._m[i] = self.beta1 * self._m[i] + (1 - self.beta1) * g
            self._v[i] = self.beta2 * self._v[i] + (1 - self.beta2) * g * g
            m_hat = self._m[i] / (1 - self.beta1**self.t)
            v_hat = self._v[i] / (1 - self.beta2**self.t)
            steps.append(self.lr * m_hat / (np.sqrt(v_hat) + self.eps))
        bias = params.bias if params.bias is not None else np.zeros(params.dim)
        return replace(
            params,
            logits=np.where(params.mask, params.logits - steps[0], params.logits),
            value=float(params.value - steps[1][0]),
            bias=bias - steps[2],
        )


def update(
    params: PolicyParams,
    batch: TrajectoryBatch,
    cfg: PpoConfig,
    rng: np.random.Generator,
    adam: Adam | None = None,
) -> PolicyParams:
    adam = adam or Adam(cfg.lr, cfg.beta1, cfg.beta2)
    n = len(batch)
    size = min(cfg.minibatch, n)
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, size):
            _, grad = ppo_loss(batch.take(order[start : start + size]), params, cfg)
            params = adam.step(params, grad)
    return params


def normalize_rewards(rewards: np.ndarray) -> np.ndarray:
    if rewards.size < 2:
        return rewards - rewards.mean()
    return (rewards - rewards.mean()) / (rewards.std() + NORM_EPS)


def run_ppo(obj: Objective, cfg: PpoConfig, seed: int, evaluator: Evaluator | None = None) -> OptimizerResult:
    evaluator = evaluator or Evaluator(obj, cfg.max_samples, "ppo", seed)
    bounds = obj.bounds
    streams = spawn_streams(seed, cfg.ncores + 1)
    rngs, master = streams[:-1], streams[-1]
    params = PolicyParams.uniform(bounds)
    adam = Adam(cfg.lr, cfg.beta1, cfg.beta2)
    updates = 0
    entropies: list[float] = []

    while not evaluator.exhausted:
        incumbent = None
        if cfg.incumbent_conditioning and evaluator.best_vector is not None:
            incumbent = evaluator.best_vector - bounds.lower
        actions, logps, workers = [], [], []
        for _ in range(cfg.n_steps):
            for w in range(cfg.ncores):
                action, slot_logp = sample_action(params, rngs[w], incumbent)
                actions.append(action)
                logps.append(slot_logp.sum())
                workers.append(w)
        rewards = np.asarray(evaluator.objectives([a + bounds.lower for a in actions], workers))
        if rewards.size < len(actions):
            break
        if cfg.reward_norm:
            rewards = normalize_rewards(rewards)
        batch = TrajectoryBatch(np.stack(actions), np.asarray(logps), rewards, incumbent, params.value)
        params = update(params, batch, cfg, master, adam)
        updates += 1
        entropies.append(logprob_and_entropy(params, actions[0], incumbent)[1])
        logger.debug("ppo seed %d update %d entropy=%.4g best=%.6g", seed, updates, entropies[-1], evaluator.best_objective)

    logger.info("ppo seed %d finished after %d updates, best=%.6g", seed, updates, evaluator.best_objective)
    return evaluator.result(
        "max_samples",
        updates=updates,
        entropies=entropies,
        samples_before_convergence=samples_before_convergence(evaluator.records),
    )
