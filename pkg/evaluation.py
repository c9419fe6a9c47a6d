"""Shared plumbing for every optimizer: errors, bounds, run records and the
budgeted, order-stable evaluation dispatcher."""

from __future__ import annotations

import logging
import math
from concurrent.futures import Executor, ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Iterable, Protocol, Sequence

import numpy as np

if TYPE_CHECKING:
    from surrogate import FomVector

logger = logging.getLogger(__name__)


class CoreOptError(Exception):
    """Base class for every error raised on purpose by this project."""


class InstanceError(CoreOptError):
    pass


class ConfigError(CoreOptError):
    pass


class DecodeError(CoreOptError):
    def __init__(self, message: str, slot: int | None = None):
        super().__init__(message)
        self.slot = slot


class ObjectiveError(CoreOptError):
    def __init__(self, message: str, vector: Sequence[int] | None = None):
        super().__init__(message)
        self.vector = None if vector is None else tuple(int(x) for x in vector)


class BudgetError(CoreOptError):
    def __init__(self, message: str, size: int):
        super().__init__(message)
        self.size = size


class StatsError(CoreOptError):
    pass


class EmptyBufferError(CoreOptError):
    pass


class MissingRunsError(CoreOptError):
    def __init__(self, missing: list[tuple[str, int]]):
        pairs = ", ".join(f"{algo}/seed {seed}" for algo, seed in missing)
        super().__init__(f"missing runs: {pairs}")
        self.missing = missing


@dataclass(frozen=True)
class Bounds:
    """Inclusive integer box ``lower[k] <= x[k] <= upper[k]``."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self) -> None:
        lower = np.asarray(self.lower, dtype=np.int64)
        upper = np.asarray(self.upper, dtype=np.int64)
        if lower.shape != upper.shape or lower.ndim != 1:
            raise ConfigError("bounds must be two vectors of equal length")
        if np.any(upper < lower):
            raise ConfigError("every upper bound must be >= its lower bound")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def uniform(cls, dim: int, low: int, high: int) -> Bounds:
        return cls(np.full(dim, low), np.full(dim, high))

    @classmethod
    def from_cardinalities(cls, cards: Sequence[int]) -> Bounds:
        cards = np.asarray(cards, dtype=np.int64)
        return cls(np.zeros_like(cards), cards - 1)

    @property
    def dim(self) -> int:
        return int(self.lower.size)

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def cardinalities(self) -> np.ndarray:
        return self.width + 1

    def size(self) -> int:
        return math.prod(int(c) for c in self.cardinalities)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return rng.integers(self.lower, self.upper + 1)

    def clip(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lower, self.upper).astype(np.int64)

    def contains(self, x: Sequence[int]) -> bool:
        x = np.asarray(x)
        return x.shape == self.lower.shape and bool(np.all((x >= self.lower) & (x <= self.upper)))


@dataclass(frozen=True)
class Evaluation:
    objective: float
    feasible: bool
    foms: FomVector | None = None


class Objective(Protocol):
    """Anything the optimizers can maximize."""

    bounds: Bounds

    def evaluate(self, vector: np.ndarray) -> Evaluation: ...


@dataclass(frozen=True)
class RunRecord:
    run_id: str
    algo: str
    seed: int
    sample_idx: int
    worker: int
    objective: float
    feasible: bool
    vector: tuple[int, ...]
    foms: FomVector | None = None


@dataclass
class OptimizerResult:
    algo: str
    seed: int
    records: list[RunRecord]
    best_vector: np.ndarray | None
    best_objective: float
    stop_reason: str
    diagnostics: dict[str, Any] = field(default_factory=dict)


def spawn_streams(seed: int, count: int) -> list[np.random.Generator]:
    """Independent generators for chains/workers, all derived from one seed."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.default_rng(child) for child in children]


_INSTALLED: Objective | None = None


def _install_objective(objective: Objective) -> None:
    global _INSTALLED
    _INSTALLED = objective


def _evaluate_installed(vector: np.ndarray) -> Evaluation:
    assert _INSTALLED is not None
    return _INSTALLED.evaluate(vector)


def make_pool(objective: Objective, workers: int) -> ProcessPoolExecutor | None:
    """Process pool bound to one objective, or None for inline evaluation."""
    if workers <= 1:
        return None
    return ProcessPoolExecutor(
        max_workers=workers, initializer=_install_objective, initargs=(objective,)
    )


class Evaluator:
    """Dispatches batches of decision vectors and logs one RunRecord each.

    The sample budget is enforced here: a batch that would overshoot is
    truncated, so every run emits exactly ``max_samples`` records.
    """

    def __init__(
        self,
        objective: Objective,
        max_samples: int,
        algo: str = "",
        seed: int = 0,
        run_id: str | None = None,
        pool: Executor | None = None,
        workers: int = 1,
    ):
        if max_samples < 1:
            raise ConfigError("max_samples must be >= 1")
        self.objective = objective
        self.bounds = objective.bounds
        self.max_samples = int(max_samples)
        self.algo = algo
        self.seed = int(seed)
        self.run_id = run_id or f"{algo}-{seed}"
        self.pool = pool
        self.workers = max(1, int(workers))
        self.records: list[RunRecord] = []
        self.best_vector: np.ndarray | None = None
        self.best_objective = -math.inf

    @property
    def used(self) -> int:
        return len(self.records)

    @property
    def remaining(self) -> int:
        return self.max_samples - len(self.records)

    @property
    def exhausted(self) -> bool:
        return self.remaining <= 0

    def _run(self, vectors: list[np.ndarray]) -> list[Evaluation]:
        if self.pool is None or len(vectors) < 2:
            return [self.objective.evaluate(v) for v in vectors]
        chunk = max(1, len(vectors) // (4 * self.workers))
        return list(self.pool.map(_evaluate_installed, vectors, chunksize=chunk))

    def evaluate(
        self, vectors: Iterable[Sequence[int]], workers: Sequence[int] | None = None
    ) -> list[Evaluation]:
        """Evaluate in submission order; returns fewer results once the budget runs out."""
        batch = [np.asarray(v, dtype=np.int64) for v in vectors]
        batch = batch[: max(0, self.remaining)]
        if not batch:
            return []
        for vector in batch:
            if not self.bounds.contains(vector):
                raise ObjectiveError("vector outside objective bounds", vector)
        results = self._run(batch)
        for position, (vector, result) in enumerate(zip(batch, results)):
            worker = workers[position] if workers is not None else position % self.workers
            self.records.append(
                RunRecord(
                    run_id=self.run_id,
                    algo=self.algo,
                    seed=self.seed,
                    sample_idx=len(self.records),
                    worker=int(worker),
                    objective=float(result.objective),
                    feasible=bool(result.feasible),
                    vector=tuple(int(x) for x in vector),
                    foms=result.foms,
                )
            )
            if result.objective > self.best_objective:
                self.best_objective = float(result.objective)
                self.best_vector = vector.copy()
        return results

    def objectives(
        self, vectors: Iterable[Sequence[int]], workers: Sequence[int] | None = None
    ) -> list[float]:
        return [r.objective for r in self.evaluate(vectors, workers)]

    def result(self, stop_reason: str, **diagnostics: Any) -> OptimizerResult:
        if self.exhausted and stop_reason != "max_samples":
            logger.debug("%s: budget also exhausted at stop (%s)", self.run_id, stop_reason)
        return OptimizerResult(
            algo=self.algo,
            seed=self.seed,
            records=self.records,
            best_vector=self.best_vector,
            best_objective=self.best_objective,
            stop_reason=stop_reason,
            diagnostics=diagnostics,
        )


def samples_before_convergence(records: Sequence[RunRecord]) -> int:
    """Number of samples drawn until the best objective was last improved."""
    best = -math.inf
    last = 0
    for record in records:
        if record.objective > best:
            best = record.objective
            last = record.sample_idx + 1
    return last


def config_from_mapping(cls: type, mapping: dict[str, Any] | None, **overrides: Any):
    """Build a frozen config dataclass, rejecting keys it does not declare."""
    values = dict(mapping or {})
    values.update({k: v for k, v in overrides.items() if v is not None})
    known = set(cls.__dataclass_fields__)
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"{cls.__name__}: unknown keys {', '.join(unknown)}")
    try:
        return cls(**values)
    except TypeError as e:
        raise ConfigError(f"{cls.__name__}: {e}") from e
