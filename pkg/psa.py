"""Parallel simulated annealing with the Lam adaptive schedule.

Energies are negated objectives.  Chains run ``chain_size`` steps between
barriers; at each barrier the temperature is updated from the segment's
accepted energies and every chain restarts from the pool of per-chain
bests, drawn from a Boltzmann distribution over those bests.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

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


@dataclass(frozen=True)
class PsaConfig:
    nchain: int = 32
    chain_size: int = 10
    chi: float = 0.1
    alpha: float = 1.0
    lambda_quality: float = 1.0
    tmin: float = 0.005
    min_accept_rate: float = 0.0
    max_samples: int = 20_000

    def __post_init__(self) -> None:
        if self.nchain < 1 or self.chain_size < 1:
            raise ConfigError("psa: nchain and chain_size must be >= 1")
        if not 0.0 < self.chi <= 1.0:
            raise ConfigError("psa: chi must lie in (0, 1]")
        if self.alpha <= 0 or self.lambda_quality <= 0:
            raise ConfigError("psa: alpha and lambda_quality must be > 0")
        if not 0.0 <= self.min_accept_rate <= 1.0:
            raise ConfigError("psa: min_accept_rate must lie in [0, 1]")
        if self.max_samples < 1:
            raise ConfigError("psa: max_samples must be >= 1")
        for name in ("alpha", "lambda_quality"):
            value = getattr(self, name)
            if not 1.0 <= value <= 2.0:
                logger.warning("psa: %s=%s is outside the usual [1, 2] range", name, value)


@dataclass(frozen=True)
class LamState:
    temperature: float
    sigma: float
    rho: float
    alpha: float = 1.0
    lam: float = 1.0


def propose(x: np.ndarray, chi: float, bounds: Bounds, rng: np.random.Generator) -> np.ndarray:
    """Resample each entry with probability chi; at least one entry always moves."""
    mask = rng.random(bounds.dim) < chi
    if not mask.any():
        mask[rng.integers(bounds.dim)] = True
    out = np.array(x, dtype=np.int64, copy=True)
    out[mask] = rng.integers(bounds.lower[mask], bounds.upper[mask] + 1)
    return out


def metropolis_accept(delta_e: float, temperature: float, rng: np.random.Generator) -> bool:
    """delta_e = E_current - E_new; downhill moves are always taken."""
    if delta_e > 0:
        return True
    return bool(rng.random() < math.exp(delta_e / temperature))


def lam_f(rho: float) -> float:
    return 4.0 * rho * (1.0 - rho) ** 2 / (2.0 - rho) ** 2


def lam_update(state: LamState) -> float:
    if state.sigma <= 0:
        return state.temperature
    t = state.temperature
    inverse = 1.0 / t + state.lam * (t**2 / state.sigma**2) * (1.0 / state.sigma) * lam_f(state.rho)
    return min(t, 1.0 / inverse)


def mixing_distribution(energies: np.ndarray, temperature: float) -> np.ndarray:
    z = -np.asarray(energies, dtype=float) / temperature
    z -= z.max()
    w = np.exp(z)
    return w / w.sum()


class ParallelAnnealer:
    """Chain state for one annealing run; also drives the annealing third of PESA."""

    def __init__(
        self,
        bounds: Bounds,
        cfg: PsaConfig,
        streams: list[np.random.Generator],
        master: np.random.Generator,
        worker_offset: int = 0,
    ):
        self.bounds = bounds
        self.cfg = cfg
        self.streams = streams
        self.master = master
        self.workers = [worker_offset + c for c in range(cfg.nchain)]
        n = cfg.nchain
        self.current = [bounds.sample(rng) for rng in streams]
        self.energy = np.full(n, np.inf)
        self.best_x = [x.copy() for x in self.current]
        self.best_energy = np.full(n, np.inf)
        self.temperature = math.inf
        self.temperatures: list[float] = []
        self.rho = 1.0
        self._accepted: list[float] = []
        self._proposed = 0

    def _record(self, c: int, x: np.ndarray, e: float) -> None:
        self.current[c] = x
        self.energy[c] = e
        if e < self.best_energy[c]:
            self.best_energy[c] = e
            self.best_x[c] = x.copy()

    def warm_up(self, evaluator: Evaluator) -> bool:
        """One all-accept sweep per chain; sets T0 = alpha * sigma0."""
        seen: list[float] = []
        for step in range(self.cfg.chain_size):
            if step == 0:
                props = [x.copy() for x in self.current]
            else:
                props = [propose(x, self.cfg.chi, self.bounds, rng) for x, rng in zip(self.current, self.streams)]
            results = evaluator.objectives(props, self.workers)
            for c, value in enumerate(results):
                self._record(c, props[c], -value)
                seen.append(-value)
            if len(results) < len(props):
                break
        sigma0 = float(np.std(seen)) if seen else 0.0
        if sigma0 > 0:
            self.temperature = self.cfg.alpha * sigma0
        else:
            logger.warning("psa: warm-up energies have zero spread, starting at T=1")
            self.temperature = 1.0
        self.temperatures.append(self.temperature)
        logger.debug("psa warm-up: sigma0=%.4g T0=%.4g", sigma0, self.temperature)
        return not evaluator.exhausted

    def run_segment(self, evaluator: Evaluator) -> bool:
        for _ in range(self.cfg.chain_size):
            props = [propose(x, self.cfg.chi, self.bounds, rng) for x, rng in zip(self.current, self.streams)]
            results = evaluator.objectives(props, self.workers)
            for c, value in enumerate(results):
                e_new = -value
                self._proposed += 1
                if metropolis_accept(self.energy[c] - e_new, self.temperature, self.streams[c]):
                    self._accepted.append(e_new)
                    self._record(c, props[c], e_new)
                elif e_new < self.best_energy[c]:
                    self.best_energy[c] = e_new
                    self.best_x[c] = props[c].copy()
            if len(results) < len(props):
                return False
        return True

    def cool(self) -> float:
        sigma = float(np.std(self._accepted)) if len(self._accepted) > 1 else 0.0
        self.rho = len(self._accepted) / self._proposed if self._proposed else 0.0
        state = LamState(self.temperature, sigma, self.rho, self.cfg.alpha, self.cfg.lambda_quality)
        self.temperature = lam_update(state)
        self.temperatures.append(self.temperature)
        self._accepted = []
        self._proposed = 0
        return self.temperature

    def mix(self) -> None:
        probs = mixing_distribution(self.best_energy, self.temperature)
        picks = self.master.choice(len(probs), size=len(probs), p=probs)
        self.current = [self.best_x[j].copy() for j in picks]
        self.energy = self.best_energy[picks].copy()

    def restart_from(self, vectors: list[np.ndarray], energies: list[float]) -> None:
        for c, (x, e) in enumerate(zip(vectors, energies)):
            self._record(c, np.array(x, dtype=np.int64), float(e))


def run_psa(
    obj: Objective, cfg: PsaConfig, seed: int, evaluator: Evaluator | None = None
) -> OptimizerResult:
    evaluator = evaluator or Evaluator(obj, cfg.max_samples, "psa", seed)
    streams = spawn_streams(seed, cfg.nchain + 1)
    annealer = ParallelAnnealer(obj.bounds, cfg, streams[:-1], streams[-1])

    reason = "max_samples"
    if annealer.warm_up(evaluator):
        if annealer.temperature < cfg.tmin:
            reason = "tmin"
        else:
            annealer.mix()
            while annealer.run_segment(evaluator):
                temperature = annealer.cool()
                logger.debug(
                    "psa seed %d: T=%.4g rho=%.3f best=%.6g",
                    seed, temperature, annealer.rho, evaluator.best_objective,
                )
                if evaluator.exhausted:
                    break
                if temperature < cfg.tmin:
                    reason = "tmin"
                    break
                if annealer.rho < cfg.min_accept_rate:
                    reason = "acceptance"
                    break
                annealer.mix()

    logger.info("psa seed %d stopped (%s) best=%.6g", seed, reason, evaluator.best_objective)
    return evaluator.result(
        reason,
        temperatures=annealer.temperatures,
        samples_before_convergence=samples_before_convergence(evaluator.records),
    )
