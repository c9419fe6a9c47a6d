"""Deterministic core surrogate, penalized objective and benchmark objectives.

The surrogate is a stand-in for a core-physics code: it maps a decoded core
to the figures of merit (FOMs) the constraints are stated on.  It makes no
claim of physical fidelity.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import asdict, dataclass, fields
from functools import lru_cache
from typing import Any, Literal, Sequence

import numpy as np

from evaluation import (
    Bounds,
    BudgetError,
    ConfigError,
    DecodeError,
    Evaluation,
    InstanceError,
    Objective,
    ObjectiveError,
)
from problem import Assignment, BurnedAssembly, CoreLayout, CoreMap, FuelType, ProblemInstance, decode

logger = logging.getLogger(__name__)

FOM_FIELDS = ("l_cy", "f_dh", "f_q", "cb", "bu_max", "lcoe", "n_enr", "n_ifba")
DEFAULT_WEIGHT = 25_000.0
BRUTE_FORCE_LIMIT = 10**6


@dataclass(frozen=True)
class FomVector:
    l_cy: float
    f_dh: float
    f_q: float
    cb: float
    bu_max: float
    lcoe: float
    n_enr: int
    n_ifba: int

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


@dataclass(frozen=True)
class SurrogateCoefficients:
    a0: float = 0.92
    a1: float = 0.040
    w_ifba: float = 0.00020
    w_waba: float = 0.0020
    nu: float = 0.25
    reflector: float = 0.65
    axial: float = 1.28
    a_cy: float = 9500.0
    a_cb: float = 11000.0
    b_cb: float = 45000.0
    delta_bu: float = 24.0
    a_cost: float = 1000.0
    c0: float = 1.5
    c_e: float = 0.9
    c_ifba: float = 0.004
    c_waba: float = 0.02
    # q_i is raised to this power before normalization; 1 keeps the plain form.
    power_exponent: float = 1.0
    lcoe_sentinel: float = 1000.0

    def __post_init__(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if not value > 0:
                raise InstanceError(f"surrogate coefficient {f.name} must be > 0, got {value}")

    @classmethod
    def from_mapping(cls, data: dict[str, Any] | None) -> SurrogateCoefficients:
        data = dict(data or {})
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise InstanceError(f"[surrogate] unknown coefficients {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in data.items()})


@dataclass(frozen=True)
class Constraint:
    """One FOM bound.  ``sense`` is le, ge, eq or range (target..upper)."""

    name: str
    sense: Literal["le", "ge", "eq", "range"]
    target: float
    upper: float | None = None
    weight: float = DEFAULT_WEIGHT
    tolerance: float = 0.0

    def __post_init__(self) -> None:
        if self.name not in FOM_FIELDS:
            raise InstanceError(f"unknown constraint {self.name!r}")
        if self.sense not in ("le", "ge", "eq", "range"):
            raise InstanceError(f"constraint {self.name}: unknown sense {self.sense!r}")
        if self.weight <= 0:
            raise InstanceError(f"constraint {self.name}: weight must be > 0")
        if self.sense == "range" and (self.upper is None or self.upper < self.target):
            raise InstanceError(f"constraint {self.name}: range needs upper >= target")
        if self.target == 0:
            raise InstanceError(f"constraint {self.name}: target must be non-zero")

    def reference_value(self, x: float) -> float | None:
        """Bound the value is measured against, or None when satisfied."""
        if self.sense == "le":
            return self.target if x > self.target else None
        if self.sense == "ge":
            return self.target if x < self.target else None
        if self.sense == "eq":
            return self.target if abs(x - self.target) > self.tolerance else None
        if x < self.target:
            return self.target
        if x > self.upper:
            return self.upper
        return None

    def satisfied(self, x: float) -> bool:
        return self.reference_value(x) is None

    def penalty(self, x: float) -> float:
        c = self.reference_value(x)
        if c is None:
            return 0.0
        return self.weight * ((x - c) / c) ** 2


@dataclass(frozen=True)
class ConstraintSet:
    constraints: tuple[Constraint, ...]

    @classmethod
    def reference(
        cls,
        l_cy_mode: str = "equality",
        weight: float = DEFAULT_WEIGHT,
        l_cy: float = 500.0,
        l_cy_tolerance: float = 0.05,
        f_dh: float = 1.45,
        f_q: float = 1.85,
        cb: float = 1200.0,
        bu_max: float = 62.0,
        n_enr: Sequence[int] = (2, 3),
        n_ifba: Sequence[int] = (1, 3),
    ) -> ConstraintSet:
        if l_cy_mode == "equality":
            cycle = Constraint("l_cy", "eq", l_cy, weight=weight, tolerance=l_cy_tolerance)
        elif l_cy_mode == "minimum":
            cycle = Constraint("l_cy", "ge", l_cy, weight=weight)
        else:
            raise InstanceError(f"unknown l_cy_mode {l_cy_mode!r}")
        return cls(
            (
                cycle,
                Constraint("f_dh", "le", f_dh, weight=weight),
                Constraint("f_q", "le", f_q, weight=weight),
                Constraint("cb", "le", cb, weight=weight),
                Constraint("bu_max", "le", bu_max, weight=weight),
                Constraint("n_enr", "range", n_enr[0], n_enr[1], weight=weight),
                Constraint("n_ifba", "range", n_ifba[0], n_ifba[1], weight=weight),
            )
        )

    @classmethod
    def from_mapping(cls, data: dict[str, Any] | None) -> ConstraintSet:
        data = dict(data or {})
        known = {
            "l_cy_mode", "weight", "l_cy", "l_cy_tolerance", "f_dh", "f_q", "cb",
            "bu_max", "n_enr", "n_ifba",
        }
        unknown = set(data) - known
        if unknown:
            raise InstanceError(f"[constraints] unknown keys {sorted(unknown)}")
        return cls.reference(**data)

    def __iter__(self):
        return iter(self.constraints)


def score_foms(foms: FomVector, cs: ConstraintSet) -> float:
    """-LCOE minus weighted squared relative violations, +1 when all hold."""
    values = foms.as_dict()
    penalty = 0.0
    feasible = True
    for constraint in cs:
        x = values[constraint.name]
        if not constraint.satisfied(x):
            feasible = False
            penalty += constraint.penalty(x)
    return -foms.lcoe - penalty + (1.0 if feasible else 0.0)


def violations(foms: FomVector, cs: ConstraintSet) -> list[str]:
    values = foms.as_dict()
    return [c.name for c in cs if not c.satisfied(values[c.name])]


def is_feasible(foms: FomVector, cs: ConstraintSet) -> bool:
    return not violations(foms, cs)


def kinf(assignment: Assignment, coeffs: SurrogateCoefficients) -> float:
    if isinstance(assignment, BurnedAssembly):
        return assignment.k_value
    return coeffs.a0 + coeffs.a1 * assignment.enrichment - poison_worth(assignment, coeffs)


def poison_worth(fuel: FuelType, coeffs: SurrogateCoefficients) -> float:
    return coeffs.w_ifba * fuel.ifba + coeffs.w_waba * fuel.waba


def fresh_cost(fuel: FuelType, coeffs: SurrogateCoefficients) -> float:
    return coeffs.c0 + coeffs.c_e * fuel.enrichment + coeffs.c_ifba * fuel.ifba + coeffs.c_waba * fuel.waba


@lru_cache(maxsize=4096)
def _cell_terms(assignment: Assignment, coeffs: SurrogateCoefficients) -> tuple[float, float, float, float]:
    """(k, poison worth, initial burnup, cost) for one location."""
    if isinstance(assignment, BurnedAssembly):
        return assignment.k_value, 0.0, assignment.bu0, 0.0
    return kinf(assignment, coeffs), poison_worth(assignment, coeffs), 0.0, fresh_cost(assignment, coeffs)


def power_from_k(k: np.ndarray, neighbors: np.ndarray, coeffs: SurrogateCoefficients) -> np.ndarray:
    """Relative power from a k field; ``neighbors[i]`` holds -1 for reflector faces."""
    k = np.asarray(k, dtype=float)
    faces = np.where(neighbors >= 0, k[np.clip(neighbors, 0, None)], coeffs.reflector * k[:, None])
    q = (k + coeffs.nu * faces.sum(axis=1)) / (1.0 + 4.0 * coeffs.nu)
    if coeffs.power_exponent != 1.0:
        q = q**coeffs.power_exponent
    return q / q.mean()


def power_map(core: CoreMap, layout: CoreLayout, coeffs: SurrogateCoefficients) -> np.ndarray:
    k = np.array([kinf(a, coeffs) for a in core.assignment])
    return power_from_k(k, layout.neighbors, coeffs)


def evaluate_core(
    core: CoreMap, inst: ProblemInstance, coeffs: SurrogateCoefficients | None = None
) -> FomVector:
    coeffs = coeffs or inst.coefficients
    terms = np.array([_cell_terms(a, coeffs) for a in core.assignment])
    k, w_bp, bu0, cost = terms.T
    p = power_from_k(k, inst.layout.neighbors, coeffs)

    l_cy = coeffs.a_cy * max(0.0, float(k.mean()) - 1.0)
    f_dh = float(p.max())
    cb = coeffs.a_cb * (float((k + w_bp).mean()) - 1.0) - coeffs.b_cb * float(w_bp.mean())
    bu_max = float((bu0 + coeffs.delta_bu * p * l_cy / 500.0).max())
    if l_cy > 0:
        lcoe = coeffs.a_cost * float(cost.sum()) / (len(core.assignment) * l_cy)
    else:
        lcoe = coeffs.lcoe_sentinel

    fresh = [a for a in core.assignment if isinstance(a, FuelType)]
    return FomVector(
        l_cy=l_cy,
        f_dh=f_dh,
        f_q=coeffs.axial * f_dh,
        cb=cb,
        bu_max=bu_max,
        lcoe=lcoe,
        n_enr=len({a.enrichment for a in fresh}),
        n_ifba=len({a.ifba for a in fresh}),
    )


class CoreObjective:
    """Objective for a loading-pattern instance: decode, evaluate, score."""

    def __init__(self, inst: ProblemInstance):
        self.instance = inst
        self.bounds = inst.bounds

    def evaluate(self, vector: np.ndarray) -> Evaluation:
        try:
            core = decode(vector, self.instance)
        except DecodeError as e:
            raise ObjectiveError(str(e), vector) from e
        foms = evaluate_core(core, self.instance)
        cs = self.instance.constraints
        return Evaluation(score_foms(foms, cs), is_feasible(foms, cs), foms)


class BenchmarkObjective:
    def __init__(self, name: str, bounds: Bounds, target: float | Sequence[float] = 0.0):
        if name not in BENCHMARKS:
            raise ConfigError(f"unknown benchmark {name!r}; choose from {', '.join(BENCHMARKS)}")
        self.name = name
        self.bounds = bounds
        self.target = np.broadcast_to(np.asarray(target, dtype=float), (bounds.dim,)).copy()

    def evaluate(self, vector: np.ndarray) -> Evaluation:
        z = np.asarray(vector, dtype=float) - self.target
        return Evaluation(float(BENCHMARKS[self.name](z)), True, None)


def _neg_sphere(z: np.ndarray) -> float:
    return -float(np.sum(z**2))


def _neg_rastrigin(z: np.ndarray) -> float:
    return -(10.0 * z.size + float(np.sum(z**2 - 10.0 * np.cos(2.0 * math.pi * z))))


BENCHMARKS = {"neg_sphere": _neg_sphere, "neg_rastrigin": _neg_rastrigin}


def benchmark_objective(
    name: str,
    dim: int,
    bounds: tuple[int, int] | Bounds,
    target: float | Sequence[float] = 0.0,
) -> BenchmarkObjective:
    if not isinstance(bounds, Bounds):
        bounds = Bounds.uniform(dim, int(bounds[0]), int(bounds[1]))
    if bounds.dim != dim:
        raise ConfigError(f"bounds have dimension {bounds.dim}, expected {dim}")
    return BenchmarkObjective(name, bounds, target)


def brute_force(obj: Objective, limit: int = BRUTE_FORCE_LIMIT) -> tuple[np.ndarray, float, int]:
    """Exhaustive lexicographic search; first best wins ties."""
    size = obj.bounds.size()
    if size > limit:
        raise BudgetError(f"search space has {size:.3g} points, more than {limit}", size)
    ranges = [range(int(lo), int(hi) + 1) for lo, hi in zip(obj.bounds.lower, obj.bounds.upper)]
    best_vector: np.ndarray | None = None
    best = -math.inf
    count = 0
    for point in itertools.product(*ranges):
        count += 1
        vector = np.array(point, dtype=np.int64)
        value = obj.evaluate(vector).objective
        if value > best:
            best = value
            best_vector = vector
    logger.info("brute force enumerated %d points, best %.6f", count, best)
    return best_vector, best, count
