"""PESA ensemble: ES, simulated annealing and a constriction PSO share one
prioritized replay buffer.

The three members run one inner loop each per period on their own third of
the workers.  Everything they evaluate goes into the buffer; at the period
barrier each member pulls buffer samples back into its state.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from es import EsConfig, EvolutionStrategy
from evaluation import (
    Bounds,
    ConfigError,
    EmptyBufferError,
    Evaluator,
    Objective,
    OptimizerResult,
    config_from_mapping,
    samples_before_convergence,
    spawn_streams,
)
from psa import ParallelAnnealer, PsaConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PsoConfig:
    npar: int = 10
    steps: int = 3
    chi_c: float = 0.7298
    c1: float = 2.05
    c2: float = 2.05
    vmax_frac: float = 0.25

    def __post_init__(self) -> None:
        if self.npar < 1 or self.steps < 1:
            raise ConfigError("pso: npar and steps must be >= 1")
        if self.chi_c <= 0 or self.c1 < 0 or self.c2 < 0:
            raise ConfigError("pso: chi_c must be > 0 and c1, c2 >= 0")
        if self.vmax_frac <= 0:
            raise ConfigError("pso: vmax_frac must be > 0")


def pso_step(
    x: np.ndarray,
    v: np.ndarray,
    pbest: np.ndarray,
    gbest: np.ndarray,
    cfg: PsoConfig,
    bounds: Bounds,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Constriction velocity update for a whole swarm (rows are particles)."""
    vmax = cfg.vmax_frac * np.maximum(bounds.width, 1)
    r1 = rng.random(x.shape)
    r2 = rng.random(x.shape)
    v = cfg.chi_c * (v + cfg.c1 * r1 * (pbest - x) + cfg.c2 * r2 * (gbest - x))
    v = np.clip(v, -vmax, vmax)
    x = np.clip(np.rint(x + v), bounds.lower, bounds.upper).astype(np.int64)
    return x, v


class ParticleSwarm:
    def __init__(
        self,
        bounds: Bounds,
        cfg: PsoConfig,
        rng: np.random.Generator,
        worker_offset: int = 0,
    ):
        self.bounds = bounds
        self.cfg = cfg
        self.rng = rng
        self.workers = [worker_offset + p for p in range(cfg.npar)]
        vmax = cfg.vmax_frac * np.maximum(bounds.width, 1)
        self.x = np.stack([bounds.sample(rng) for _ in range(cfg.npar)])
        self.v = rng.uniform(-vmax, vmax, size=self.x.shape)
        self.fitness = np.full(cfg.npar, -np.inf)
        self.pbest = self.x.copy()
        self.pbest_f = np.full(cfg.npar, -np.inf)
        self.gbest = self.x[0].copy()
        self.gbest_f = -math.inf
        self._started = False

    def observe(self, values: Sequence[float]) -> None:
        for p, value in enumerate(values):
            self.fitness[p] = value
            if value > self.pbest_f[p]:
                self.pbest_f[p] = value
                self.pbest[p] = self.x[p]
            if value > self.gbest_f:
                self.gbest_f = float(value)
                self.gbest = self.x[p].copy()

    def run_period(self, evaluator: Evaluator) -> bool:
        for _ in range(self.cfg.steps):
            if self._started:
                self.x, self.v = pso_step(self.x, self.v, self.pbest, self.gbest, self.cfg, self.bounds, self.rng)
            self._started = True
            values = evaluator.objectives(list(self.x), self.workers)
            self.observe(values)
            if len(values) < self.cfg.npar:
                return False
        return True

    def inject(self, vectors: Sequence[np.ndarray], fitnesses: Sequence[float]) -> None:
        """Replace the worst particles; injected particles start at rest."""
        order = sorted(range(self.cfg.npar), key=lambda p: (self.fitness[p], p))
        for p, y, f in zip(order, vectors, fitnesses):
            self.x[p] = y
            self.v[p] = 0.0
            self.fitness[p] = f
            self.pbest[p] = y
            self.pbest_f[p] = f
            if f > self.gbest_f:
                self.gbest_f = float(f)
                self.gbest = np.array(y, dtype=np.int64)


class ReplayBuffer:
    """Solutions sorted by fitness (best first), one entry per distinct vector."""

    def __init__(self, capacity: int, alpha: float = 1.0):
        if capacity < 1:
            raise ConfigError("buffer capacity must be >= 1")
        if not 0.0 <= alpha <= 1.0:
            raise ConfigError("priority exponent must lie in [0, 1]")
        self.capacity = capacity
        self.alpha = alpha
        self._entries: dict[tuple[int, ...], tuple[float, int]] = {}
        self._order: list[tuple[int, ...]] = []
        self._counter = 0

    def __len__(self) -> int:
        return len(self._order)

    def append(self, entries: Sequence[tuple[Sequence[int], float]]) -> None:
        for vector, fitness in entries:
            key = tuple(int(x) for x in vector)
            known = self._entries.get(key)
            if known is None:
                self._entries[key] = (float(fitness), self._counter)
                self._counter += 1
            elif fitness > known[0]:
                self._entries[key] = (float(fitness), known[1])
        ranked = sorted(self._entries, key=lambda k: (-self._entries[k][0], self._entries[k][1]))
        for key in ranked[self.capacity :]:
            del self._entries[key]
        self._order = ranked[: self.capacity]

    def entries(self) -> list[tuple[tuple[int, ...], float]]:
        return [(key, self._entries[key][0]) for key in self._order]

    def probabilities(self) -> np.ndarray:
        if not self._order:
            raise EmptyBufferError("replay buffer is empty")
        ranks = np.arange(1, len(self._order) + 1, dtype=float)
        w = (1.0 / ranks) ** self.alpha
        return w / w.sum()

    def sample(self, n: int, rng: np.random.Generator) -> list[tuple[np.ndarray, float]]:
        probs = self.probabilities()
        picks = rng.choice(len(probs), size=n, replace=True, p=probs)
        return [
            (np.array(self._order[i], dtype=np.int64), self._entries[self._order[i]][0]) for i in picks
        ]


def _unzip(samples: list[tuple[np.ndarray, float]]) -> tuple[list[np.ndarray], list[float]]:
    return [s[0] for s in samples], [s[1] for s in samples]


@dataclass(frozen=True)
class PesaConfig:
    buffer_capacity: int = 300
    alpha_priority: float = 1.0
    es: EsConfig = field(default_factory=lambda: EsConfig(lambda_pop=30))
    psa: PsaConfig = field(default_factory=lambda: PsaConfig(nchain=10, chain_size=3))
    pso: PsoConfig = field(default_factory=PsoConfig)
    max_samples: int = 20_000

    def __post_init__(self) -> None:
        es_budget = self.es.lambda_pop
        psa_budget = self.psa.nchain * self.psa.chain_size
        pso_budget = self.pso.npar * self.pso.steps
        if not es_budget == psa_budget == pso_budget:
            raise ConfigError(
                f"pesa: member budgets per period differ (es {es_budget}, psa {psa_budget}, pso {pso_budget})"
            )
        if self.buffer_capacity < 1:
            raise ConfigError("pesa: buffer_capacity must be >= 1")
        if not 0.0 <= self.alpha_priority <= 1.0:
            raise ConfigError("pesa: alpha_priority must lie in [0, 1]")
        if self.max_samples < 1:
            raise ConfigError("pesa: max_samples must be >= 1")

    @classmethod
    def from_mapping(cls, mapping: dict[str, Any] | None, **overrides: Any) -> PesaConfig:
        values = dict(mapping or {})
        nested = {
            "es": (EsConfig, {"lambda_pop": 30}),
            "psa": (PsaConfig, {"nchain": 10, "chain_size": 3}),
            "pso": (PsoConfig, {}),
        }
        for key, (sub_cls, defaults) in nested.items():
            values[key] = config_from_mapping(sub_cls, {**defaults, **values.get(key, {})})
        return config_from_mapping(cls, values, **overrides)


def run_pesa(obj: Objective, cfg: PesaConfig, seed: int, evaluator: Evaluator | None = None) -> OptimizerResult:
    evaluator = evaluator or Evaluator(obj, cfg.max_samples, "pesa", seed)
    bounds = obj.bounds
    streams = spawn_streams(seed, cfg.psa.nchain + 4)
    chain_streams = streams[: cfg.psa.nchain]
    psa_master, es_rng, pso_rng, buffer_rng = streams[cfg.psa.nchain :]

    third = cfg.psa.nchain
    es = EvolutionStrategy(bounds, cfg.es, es_rng, worker_offset=0, worker_count=third)
    annealer = ParallelAnnealer(bounds, cfg.psa, chain_streams, psa_master, worker_offset=third)
    swarm = ParticleSwarm(bounds, cfg.pso, pso_rng, worker_offset=2 * third)
    buffer = ReplayBuffer(cfg.buffer_capacity, cfg.alpha_priority)

    periods = 0
    warmed = False
    while not evaluator.exhausted:
        start = evaluator.used
        running = es.evaluate(evaluator)
        if running:
            running = annealer.run_segment(evaluator) if warmed else annealer.warm_up(evaluator)
            if warmed and running:
                annealer.cool()
            warmed = True
        if running:
            running = swarm.run_period(evaluator)
        buffer.append([(r.vector, r.objective) for r in evaluator.records[start:]])
        periods += 1
        if not running or evaluator.exhausted:
            break

        es.inject(*_unzip(buffer.sample(cfg.es.mu, buffer_rng)))
        vectors, fitnesses = _unzip(buffer.sample(cfg.psa.nchain, buffer_rng))
        annealer.restart_from(vectors, [-f for f in fitnesses])
        swarm.inject(*_unzip(buffer.sample(math.ceil(cfg.pso.npar / 4), buffer_rng)))
        es.breed()
        logger.debug(
            "pesa seed %d period %d buffer=%d best=%.6g T=%.4g",
            seed, periods, len(buffer), evaluator.best_objective, annealer.temperature,
        )

    logger.info("pesa seed %d finished after %d periods, best=%.6g", seed, periods, evaluator.best_objective)
    return evaluator.result(
        "max_samples",
        periods=periods,
        buffer_size=len(buffer),
        temperatures=annealer.temperatures,
        samples_before_convergence=samples_before_convergence(evaluator.records),
    )
