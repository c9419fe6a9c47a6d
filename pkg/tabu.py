"""Parallel tabu search over perturb moves.

A move sets one slot to a new value; its (slot, value) attribute becomes
tabu for ``tenure`` steps and its long-term frequency is added to the
candidate's energy.  Chains share memory by merging their forks at each
barrier, then restart from the pool of chain bests.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Literal, NamedTuple, Sequence

import numpy as np
from scipy.stats import rankdata

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

RESTART_STRATEGIES = ("hard", "roulette", "rank", "softmax")
ROULETTE_EPS = 1e-9

Attribute = tuple[int, int]


@dataclass(frozen=True)
class TsConfig:
    nchain: int = 32
    chain_size: int = 10
    sample_fraction: float = 0.1
    tenure: float = 6
    penalization_weight: float = 1.0
    reinforce_best: Literal["hard", "roulette", "rank", "softmax"] = "rank"
    m: float = 5.0
    kappa: float = 1.0
    max_samples: int = 20_000

    def __post_init__(self) -> None:
        if self.nchain < 1 or self.chain_size < 1:
            raise ConfigError("tabu: nchain and chain_size must be >= 1")
        if not 0.0 < self.sample_fraction <= 1.0:
            raise ConfigError("tabu: sample_fraction must lie in (0, 1]")
        if self.tenure < 1:
            raise ConfigError("tabu: tenure must be >= 1")
        if self.penalization_weight < 0:
            raise ConfigError("tabu: penalization_weight must be >= 0")
        if self.reinforce_best not in RESTART_STRATEGIES:
            raise ConfigError(f"tabu: reinforce_best must be one of {', '.join(RESTART_STRATEGIES)}")
        if self.kappa < 0:
            raise ConfigError("tabu: kappa must be >= 0")
        if self.max_samples < 1:
            raise ConfigError("tabu: max_samples must be >= 1")


class TabuMemory:
    def __init__(self, tenure: float, penalization_weight: float = 1.0):
        self.tenure = tenure
        self.penalization_weight = penalization_weight
        self.short: dict[Attribute, float] = {}
        self.long: Counter[Attribute] = Counter()
        self._fresh: Counter[Attribute] = Counter()

    def is_tabu(self, attr: Attribute, step: int) -> bool:
        return self.short.get(attr, -math.inf) > step

    def frequency(self, attr: Attribute) -> int:
        return self.long[attr]

    def record(self, attr: Attribute, step: int) -> None:
        self.short[attr] = max(self.short.get(attr, -math.inf), step + self.tenure)
        self.long[attr] += 1
        self._fresh[attr] += 1

    def fork(self) -> TabuMemory:
        child = TabuMemory(self.tenure, self.penalization_weight)
        child.short = dict(self.short)
        child.long = Counter(self.long)
        return child

    def absorb(self, child: TabuMemory) -> None:
        """Merge a fork: expiries by max, frequencies by sum of what the fork added."""
        for attr, expiry in child.short.items():
            if expiry > self.short.get(attr, -math.inf):
                self.short[attr] = expiry
        self.long.update(child._fresh)

    def expire(self, step: int) -> None:
        self.short = {a: e for a, e in self.short.items() if e > step}


@dataclass(frozen=True)
class Move:
    slot: int
    value: int
    vector: np.ndarray = field(compare=False, repr=False)

    @property
    def attribute(self) -> Attribute:
        return (self.slot, self.value)


class TabuStep(NamedTuple):
    """One taken move; ``aspirated`` marks a move whose attribute was tabu."""

    chain: int
    step: int
    slot: int
    value: int
    aspirated: bool
    energy: float
    aspiration: float


def _move(x: np.ndarray, slot: int, bounds: Bounds, rng: np.random.Generator) -> Move:
    value = int(rng.integers(bounds.lower[slot], bounds.upper[slot]))
    if value >= x[slot]:
        value += 1
    vector = np.array(x, dtype=np.int64, copy=True)
    vector[slot] = value
    return Move(int(slot), value, vector)


def sample_moves(x: np.ndarray, fraction: float, bounds: Bounds, rng: np.random.Generator) -> list[Move]:
    movable = np.flatnonzero(bounds.width > 0)
    if movable.size == 0:
        return []
    n = min(movable.size, max(1, math.ceil(fraction * bounds.dim - 1e-9)))
    slots = rng.choice(movable, size=n, replace=False)
    return [_move(x, int(k), bounds, rng) for k in slots]


def select_move(
    scored: Sequence[tuple[Move, float]], memory: TabuMemory, best_energy: float, step: int
) -> int | None:
    """Index of the chosen candidate, or None when every candidate is tabu."""
    w = memory.penalization_weight
    order = sorted(
        range(len(scored)),
        key=lambda i: (scored[i][1] + w * memory.frequency(scored[i][0].attribute), i),
    )
    for i in order:
        move, energy = scored[i]
        if not memory.is_tabu(move.attribute, step) or energy < best_energy:
            memory.record(move.attribute, step)
            return i
    return None


def remainder_sweep(
    x: np.ndarray,
    sampled: set[int],
    bounds: Bounds,
    chain_best: float,
    evaluate: Callable[[list[np.ndarray]], list[float]],
    rng: np.random.Generator,
    memory: TabuMemory | None = None,
    step: int = 0,
    aspiration: float = -math.inf,
) -> tuple[Move, float] | None:
    """Try every slot the sample skipped; keep the best improving candidate.

    With a memory, a tabu candidate is only admissible below ``aspiration``.
    """
    moves = [
        _move(x, int(k), bounds, rng)
        for k in range(bounds.dim)
        if k not in sampled and bounds.width[k] > 0
    ]
    if not moves:
        return None
    energies = evaluate([m.vector for m in moves])
    best: tuple[Move, float] | None = None
    for move, energy in zip(moves, energies):
        if memory is not None and memory.is_tabu(move.attribute, step) and not energy < aspiration:
            continue
        if energy < chain_best and (best is None or energy < best[1]):
            best = (move, energy)
    return best


def restart_probs(
    energies: Sequence[float], strategy: str, m: float = 5.0, kappa: float = 1.0
) -> np.ndarray:
    e = np.asarray(energies, dtype=float)
    n = e.size
    if strategy == "hard":
        p = np.zeros(n)
        p[int(np.argmin(e))] = 1.0
        return p
    if strategy == "roulette":
        w = e.max() - e + ROULETTE_EPS
        return w / w.sum()
    if strategy == "rank":
        if n == 1:
            return np.ones(1)
        # rank 1 is the worst (highest) energy
        rank = rankdata(-e, method="ordinal")
        p = (2.0 - m + 2.0 * (m - 1.0) * (rank - 1.0) / (n - 1.0)) / n
        p = np.clip(p, 0.0, None)
        if p.sum() <= 0:
            p = (rank == n).astype(float)
        return p / p.sum()
    if strategy == "softmax":
        z = -kappa * e
        z -= z.max()
        w = np.exp(z)
        return w / w.sum()
    raise ConfigError(f"unknown restart strategy {strategy!r}")


def run_tabu(
    obj: Objective, cfg: TsConfig, seed: int, evaluator: Evaluator | None = None
) -> OptimizerResult:
    evaluator = evaluator or Evaluator(obj, cfg.max_samples, "tabu", seed)
    bounds = obj.bounds
    streams = spawn_streams(seed, cfg.nchain + 1)
    rngs, master = streams[:-1], streams[-1]
    chains = list(range(cfg.nchain))

    current = [bounds.sample(rng) for rng in rngs]
    values = evaluator.objectives(current, chains)
    energy = np.full(cfg.nchain, np.inf)
    energy[: len(values)] = [-v for v in values]
    best_x = [x.copy() for x in current]
    best_energy = energy.copy()

    shared = TabuMemory(cfg.tenure, cfg.penalization_weight)
    trace: list[TabuStep] = []
    step = 0
    segments = 0

    def take(c: int, move: Move, e: float) -> None:
        current[c] = move.vector
        energy[c] = e
        if e < best_energy[c]:
            best_energy[c] = e
            best_x[c] = move.vector.copy()

    while not evaluator.exhausted:
        forks = [shared.fork() for _ in chains]
        for _ in range(cfg.chain_size):
            proposals = [sample_moves(current[c], cfg.sample_fraction, bounds, rngs[c]) for c in chains]
            flat = [m.vector for moves in proposals for m in moves]
            if not flat:
                evaluator.objectives(current, chains)
                step += 1
                if evaluator.exhausted:
                    break
                continue
            owners = [c for c, moves in zip(chains, proposals) for _ in moves]
            results = [-v for v in evaluator.objectives(flat, owners)]
            if len(results) < len(flat):
                break
            position = 0
            for c in chains:
                moves = proposals[c]
                scored = list(zip(moves, results[position : position + len(moves)]))
                position += len(moves)
                if not scored:
                    continue
                global_best = float(best_energy.min())
                if not any(e < best_energy[c] for _, e in scored):
                    swept = remainder_sweep(
                        current[c],
                        {m.slot for m in moves},
                        bounds,
                        best_energy[c],
                        lambda vs, c=c: [-v for v in evaluator.objectives(vs, [c] * len(vs))],
                        rngs[c],
                        memory=forks[c],
                        step=step,
                        aspiration=global_best,
                    )
                    if swept is not None:
                        move, e = swept
                        aspirated = forks[c].is_tabu(move.attribute, step)
                        forks[c].record(move.attribute, step)
                        trace.append(TabuStep(c, step, move.slot, move.value, aspirated, e, global_best))
                        take(c, move, e)
                        continue
                    if evaluator.exhausted:
                        break
                tabu_before = {m.attribute for m, _ in scored if forks[c].is_tabu(m.attribute, step)}
                i = select_move(scored, forks[c], global_best, step)
                if i is not None:
                    move, e = scored[i]
                    was_tabu = move.attribute in tabu_before
                    trace.append(TabuStep(c, step, move.slot, move.value, was_tabu, e, global_best))
                    take(c, move, e)
            step += 1
            if evaluator.exhausted:
                break
        if evaluator.exhausted:
            break

        for fork in forks:
            shared.absorb(fork)
        shared.expire(step)
        probs = restart_probs(best_energy, cfg.reinforce_best, cfg.m, cfg.kappa)
        picks = master.choice(cfg.nchain, size=cfg.nchain, p=probs)
        for c, j in zip(chains, picks):
            current[c] = best_x[j].copy()
            energy[c] = best_energy[j]
            if best_energy[j] < best_energy[c]:
                best_energy[c] = best_energy[j]
                best_x[c] = best_x[j].copy()
        segments += 1
        logger.debug("tabu seed %d segment %d best=%.6g", seed, segments, evaluator.best_objective)

    logger.info("tabu seed %d finished after %d segments, best=%.6g", seed, segments, evaluator.best_objective)
    return evaluator.result(
        "max_samples",
        moves=trace,
        segments=segments,
        samples_before_convergence=samples_before_convergence(evaluator.records),
    )
