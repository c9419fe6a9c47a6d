"""(mu, lambda) evolution strategy on integer vectors.

Every offspring comes from exactly one of crossover, mutation or cloning.
Mutation is the self-adaptive log-normal scheme: the strategy vector is
scaled first, then a rounded Gaussian step is taken and clamped to bounds.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Literal, Sequence

import numpy as np

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

Variation = Literal["crossover", "mutation", "clone"]


@dataclass(frozen=True)
class EsConfig:
    mu: int = 2
    lambda_pop: int = 32
    cxpb: float = 0.65
    mutpb: float = 0.3
    s_min_frac: float = 0.01
    s_max_frac: float = 0.5
    s_init_frac: float = 0.1
    max_samples: int = 20_000

    def __post_init__(self) -> None:
        if not 1 <= self.mu <= self.lambda_pop:
            raise ConfigError("es: need 1 <= mu <= lambda_pop")
        if min(self.cxpb, self.mutpb) < 0 or self.cxpb + self.mutpb > 1.0 + 1e-12:
            raise ConfigError("es: cxpb and mutpb must be >= 0 with cxpb + mutpb <= 1")
        if not 0 < self.s_min_frac <= self.s_max_frac:
            raise ConfigError("es: need 0 < s_min_frac <= s_max_frac")
        if not self.s_min_frac <= self.s_init_frac <= self.s_max_frac:
            raise ConfigError("es: s_init_frac must lie in [s_min_frac, s_max_frac]")
        if self.max_samples < 1:
            raise ConfigError("es: max_samples must be >= 1")


@dataclass(frozen=True)
class Individual:
    y: np.ndarray
    s: np.ndarray
    fitness: float | None = None


def strategy_limits(bounds: Bounds, cfg: EsConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-entry (s_min, s_max, s_init) as fractions of each entry's range."""
    span = np.maximum(bounds.width, 1).astype(float)
    return cfg.s_min_frac * span, cfg.s_max_frac * span, cfg.s_init_frac * span


def select_mu(population: Sequence[Individual], mu: int) -> list[Individual]:
    order = sorted(range(len(population)), key=lambda i: (-population[i].fitness, i))
    return [population[i] for i in order[:mu]]


def two_point_crossover(
    ind1: Individual,
    ind2: Individual,
    rng: np.random.Generator,
    points: tuple[int, int] | None = None,
) -> Individual:
    if ind1.y.shape != ind2.y.shape:
        raise ConfigError("crossover parents must have the same length")
    if points is None:
        pt1, pt2 = sorted(int(p) for p in rng.choice(ind1.y.size + 1, size=2, replace=False))
    else:
        pt1, pt2 = points
    y = ind1.y.copy()
    s = ind1.s.copy()
    y[pt1:pt2] = ind2.y[pt1:pt2]
    s[pt1:pt2] = ind2.s[pt1:pt2]
    return Individual(y, s)


def lognormal_rates(n: int) -> tuple[float, float]:
    return 1.0 / math.sqrt(2.0 * n), 1.0 / math.sqrt(2.0 * math.sqrt(n))


def mutate_lognormal(
    ind: Individual,
    rng: np.random.Generator,
    bounds: Bounds,
    s_min: np.ndarray,
    s_max: np.ndarray,
) -> Individual:
    n = ind.y.size
    tau, tau_star = lognormal_rates(n)
    g, g_star = rng.standard_normal(2)
    s = np.clip(ind.s * math.exp(tau * g + tau_star * g_star), s_min, s_max)
    step = s * rng.standard_normal(n)
    y = bounds.clip(np.rint(ind.y + step))
    return Individual(y, s)


def choose_variation(rng: np.random.Generator, cxpb: float, mutpb: float) -> Variation:
    u = rng.random()
    if u < cxpb:
        return "crossover"
    if u < cxpb + mutpb:
        return "mutation"
    return "clone"


class EvolutionStrategy:
    """Population state; also drives the ES third of PESA."""

    def __init__(
        self,
        bounds: Bounds,
        cfg: EsConfig,
        rng: np.random.Generator,
        worker_offset: int = 0,
        worker_count: int | None = None,
    ):
        self.bounds = bounds
        self.cfg = cfg
        self.rng = rng
        self.worker_offset = worker_offset
        self.worker_count = worker_count or cfg.lambda_pop
        self.s_min, self.s_max, self.s_init = strategy_limits(bounds, cfg)
        self.population: list[Individual] = []
        self.pending = [Individual(bounds.sample(rng), self.s_init.copy()) for _ in range(cfg.lambda_pop)]
        self.generations = 0

    def evaluate(self, evaluator: Evaluator) -> bool:
        """Score the pending offspring; False when the budget cut the batch short."""
        workers = [self.worker_offset + i % self.worker_count for i in range(len(self.pending))]
        values = evaluator.objectives([ind.y for ind in self.pending], workers)
        scored = [replace(ind, fitness=v) for ind, v in zip(self.pending, values)]
        self.pending = []
        if scored:
            self.population = scored
            self.generations += 1
        return len(values) == len(workers)

    def inject(self, vectors: Sequence[np.ndarray], fitnesses: Sequence[float]) -> None:
        """Replace the worst members of the population with outside solutions."""
        order = sorted(range(len(self.population)), key=lambda i: (self.population[i].fitness, i))
        for slot, y, f in zip(order, vectors, fitnesses):
            self.population[slot] = Individual(np.asarray(y, dtype=np.int64).copy(), self.s_init.copy(), float(f))

    def breed(self) -> None:
        parents = select_mu(self.population, self.cfg.mu)
        offspring = []
        for _ in range(self.cfg.lambda_pop):
            kind = choose_variation(self.rng, self.cfg.cxpb, self.cfg.mutpb)
            if kind == "crossover":
                if len(parents) > 1:
                    i, j = self.rng.choice(len(parents), size=2, replace=False)
                else:
                    i = j = 0
                child = two_point_crossover(parents[i], parents[j], self.rng)
            elif kind == "mutation":
                child = mutate_lognormal(
                    parents[self.rng.integers(len(parents))], self.rng, self.bounds, self.s_min, self.s_max
                )
            else:
                parent = parents[self.rng.integers(len(parents))]
                child = Individual(parent.y.copy(), parent.s.copy())
            offspring.append(child)
        self.pending = offspring

    def mean_fitness(self) -> float:
        if not self.population:
            return math.nan
        return float(np.mean([ind.fitness for ind in self.population]))


def run_es(obj: Objective, cfg: EsConfig, seed: int, evaluator: Evaluator | None = None) -> OptimizerResult:
    evaluator = evaluator or Evaluator(obj, cfg.max_samples, "es", seed)
    rng = spawn_streams(seed, 1)[0]
    strategy = EvolutionStrategy(obj.bounds, cfg, rng)

    while strategy.evaluate(evaluator) and not evaluator.exhausted:
        logger.debug(
            "es seed %d generation %d mean=%.6g best=%.6g",
            seed, strategy.generations, strategy.mean_fitness(), evaluator.best_objective,
        )
        strategy.breed()

    logger.info("es seed %d finished after %d generations, best=%.6g", seed, strategy.generations, evaluator.best_objective)
    return evaluator.result(
        "max_samples",
        generations=strategy.generations,
        last_generation_mean=strategy.mean_fitness(),
        samples_before_convergence=samples_before_convergence(evaluator.records),
    )
