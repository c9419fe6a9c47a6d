"""Loading-pattern problem instances and the decision-vector decoder.

A decision vector holds one integer per slot of the symmetry-reduced core
map.  Decoding walks the slots in a fixed order (row-major, periphery last),
looks up the chosen option and repairs it when the option is used up or
would break a tactic.  Repair scans the slot's choice list cyclically from
the chosen index and keeps the first option after which the rest of the
inventory can still be placed, so every in-range vector decodes to a valid
core.
"""

from __future__ import annotations

import logging
import math
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any, Literal, Sequence, Union

import numpy as np

from evaluation import Bounds, DecodeError, InstanceError

if TYPE_CHECKING:
    from surrogate import ConstraintSet, SurrogateCoefficients

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

ENRICHMENTS = (4.00, 4.20, 4.40, 4.60, 4.80, 4.95)
IFBA_LOADINGS = (128, 156)
WABA_PADS = (0, 12, 24)

PERIPHERY = "periphery"
RING = "ring"
INTERIOR = "interior"
CENTER = "center"

SYMMETRIES = ("eighth", "quarter", "none")


@dataclass(frozen=True)
class FuelType:
    enrichment: float
    ifba: int
    waba: int

    @property
    def label(self) -> str:
        return f"{self.enrichment:.2f}/{self.ifba}/{self.waba}"


@dataclass(frozen=True)
class BurnedAssembly:
    id: str
    burn_class: Literal["once", "twice"]
    k_value: float
    bu0: float
    multiplicity: int = 1

    @property
    def label(self) -> str:
        return self.id


Assignment = Union[FuelType, BurnedAssembly]


def build_catalog(
    enrichments: Sequence[float] = ENRICHMENTS,
    ifba: Sequence[int] = IFBA_LOADINGS,
    waba: Sequence[int] = WABA_PADS,
) -> list[FuelType]:
    """Fresh fuel types, enrichment-major then ifba then waba.

    Heavy IFBA (156 rods) is never combined with WABA pads, which leaves 24
    of the 36 combinations for the default sets.
    """
    return [
        FuelType(float(e), int(i), int(w))
        for e in enrichments
        for i in ifba
        for w in waba
        if not (i >= 156 and w > 0)
    ]


@dataclass(frozen=True)
class Slot:
    index: int
    cell: tuple[int, int]
    reduced: tuple[int, int]
    orbit: tuple[int, ...]
    location_class: str

    @property
    def multiplicity(self) -> int:
        return len(self.orbit)


class CoreLayout:
    """Occupancy mask, location classes and the symmetry-reduced slot map."""

    def __init__(
        self,
        grid: Sequence[str],
        symmetry: str = "eighth",
        center: tuple[int, int] | None | bool = True,
    ):
        rows = [row.strip() for row in grid if row.strip()]
        if not rows:
            raise InstanceError("layout grid is empty")
        if len({len(row) for row in rows}) != 1:
            raise InstanceError("layout grid rows must all have the same width")
        if any(ch not in "#." for row in rows for ch in row):
            raise InstanceError("layout grid may only contain '#' and '.'")
        if symmetry not in SYMMETRIES:
            raise InstanceError(f"unknown symmetry {symmetry!r}")

        self.grid = tuple(rows)
        self.symmetry = symmetry
        self.n_rows = len(rows)
        self.n_cols = len(rows[0])
        if symmetry == "eighth" and self.n_rows != self.n_cols:
            raise InstanceError("eighth symmetry needs a square grid")

        self.cells: list[tuple[int, int]] = [
            (r, c) for r in range(self.n_rows) for c in range(self.n_cols) if rows[r][c] == "#"
        ]
        self.index = {cell: i for i, cell in enumerate(self.cells)}
        self.center = self._resolve_center(center)

        neighbors = np.full((len(self.cells), 4), -1, dtype=np.int64)
        for i, (r, c) in enumerate(self.cells):
            for d, (dr, dc) in enumerate(((-1, 0), (0, 1), (1, 0), (0, -1))):
                neighbors[i, d] = self.index.get((r + dr, c + dc), -1)
            if np.all(neighbors[i] < 0):
                raise InstanceError(f"cell {(r, c)} has no in-core neighbor")
        self.neighbors = neighbors

        for r, c in self.cells:
            for image in self.images(r, c):
                if image not in self.index:
                    raise InstanceError(f"grid is not {symmetry}-symmetric at {(r, c)}")

        periphery = np.any(neighbors < 0, axis=1)
        classes = []
        for i, cell in enumerate(self.cells):
            if cell == self.center:
                classes.append(CENTER)
            elif periphery[i]:
                classes.append(PERIPHERY)
            elif np.any(periphery[neighbors[i][neighbors[i] >= 0]]):
                classes.append(RING)
            else:
                classes.append(INTERIOR)
        self.location_class = tuple(classes)

        self.slots = self._build_slots()
        slot_of_cell = np.full(len(self.cells), -1, dtype=np.int64)
        for slot in self.slots:
            slot_of_cell[list(slot.orbit)] = slot.index
        self.slot_of_cell = slot_of_cell

        self.squares: list[tuple[int, int, int, int]] = []
        for r in range(self.n_rows - 1):
            for c in range(self.n_cols - 1):
                block = [(r, c), (r, c + 1), (r + 1, c), (r + 1, c + 1)]
                if all(cell in self.index for cell in block):
                    self.squares.append(tuple(self.index[cell] for cell in block))

    def _resolve_center(self, center) -> tuple[int, int] | None:
        if center is False or center is None:
            return None
        if center is True:
            if self.n_rows % 2 == 0 or self.n_cols % 2 == 0:
                return None
            cell = (self.n_rows // 2, self.n_cols // 2)
        else:
            cell = (int(center[0]), int(center[1]))
        if cell not in self.index:
            raise InstanceError(f"center {cell} is not an in-core cell")
        return cell

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    def images(self, r: int, c: int) -> list[tuple[int, int]]:
        """Mirror images of a cell under the layout's symmetry group."""
        found = {(r, c)}
        if self.symmetry in ("quarter", "eighth"):
            rr, cc = self.n_rows - 1 - r, self.n_cols - 1 - c
            found |= {(rr, c), (r, cc), (rr, cc)}
        if self.symmetry == "eighth":
            found |= {(b, a) for a, b in found}
        return sorted(found)

    def _in_reduced_region(self, r: int, c: int) -> bool:
        if self.symmetry == "none":
            return True
        i, j = r - self.n_rows // 2, c - self.n_cols // 2
        if i < 0 or j < 0:
            return False
        return self.symmetry == "quarter" or j >= i

    def _build_slots(self) -> tuple[Slot, ...]:
        inner: list[tuple[int, int]] = []
        outer: list[tuple[int, int]] = []
        for cell in self.cells:
            if self._in_reduced_region(*cell):
                if self.location_class[self.index[cell]] == PERIPHERY:
                    outer.append(cell)
                else:
                    inner.append(cell)
        slots = []
        for k, (r, c) in enumerate(inner + outer):
            orbit = tuple(self.index[image] for image in self.images(r, c))
            if self.symmetry == "none":
                reduced = (r, c)
            else:
                reduced = (r - self.n_rows // 2, c - self.n_cols // 2)
            slots.append(Slot(k, (r, c), reduced, orbit, self.location_class[self.index[(r, c)]]))
        covered = sorted(i for slot in slots for i in slot.orbit)
        if covered != list(range(len(self.cells))):
            raise InstanceError("reduced map does not tile the full core")
        return tuple(slots)

    def class_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for name in self.location_class:
            counts[name] = counts.get(name, 0) + 1
        return counts


@dataclass(frozen=True)
class Tactics:
    twice_at_periphery: bool = False
    no_fresh_at_periphery: bool = False
    fresh_ring: bool = False
    no_fresh_square: bool = False


@dataclass(frozen=True)
class SlotSpec:
    slot: Slot
    choices: tuple[Assignment, ...]
    fresh_allowed: bool
    burnable: bool
    square_breaker: bool = False

    @property
    def cardinality(self) -> int:
        return len(self.choices)


@dataclass(frozen=True)
class TacticViolation:
    tactic: str
    cell: tuple[int, int]


@dataclass(frozen=True)
class CoreMap:
    layout: CoreLayout = field(repr=False, compare=False)
    assignment: tuple[Assignment, ...]

    def at(self, r: int, c: int) -> Assignment:
        return self.assignment[self.layout.index[(r, c)]]

    @property
    def fresh_mask(self) -> np.ndarray:
        return np.array([isinstance(a, FuelType) for a in self.assignment])

    @property
    def n_fresh(self) -> int:
        return int(self.fresh_mask.sum())

    def burned_ids(self) -> list[str]:
        return sorted(a.id for a in self.assignment if isinstance(a, BurnedAssembly))

    def render(self, catalog: Sequence[FuelType] | None = None) -> str:
        """Text map: fresh cells by catalog index (``F7``), burned cells by id."""
        fresh_code = {ft: f"F{i}" for i, ft in enumerate(catalog or [])}
        width = max(
            [len(fresh_code.get(a, a.label)) for a in self.assignment] + [1]
        )
        lines = []
        for r in range(self.layout.n_rows):
            row = []
            for c in range(self.layout.n_cols):
                i = self.layout.index.get((r, c))
                if i is None:
                    row.append(" " * width)
                else:
                    a = self.assignment[i]
                    row.append(fresh_code.get(a, a.label).rjust(width))
            lines.append(" ".join(row).rstrip())
        return "\n".join(lines)


@dataclass
class _ClassCounters:
    periphery: int = 0
    inner: int = 0
    breakers_periphery: int = 0
    breakers_inner: int = 0
    once: int = 0
    twice: int = 0


class ProblemInstance:
    """Immutable after construction; safe to share with worker processes."""

    def __init__(
        self,
        name: str,
        layout: CoreLayout,
        catalog: Sequence[FuelType],
        burned: Sequence[BurnedAssembly],
        n_fresh: int,
        tactics: Tactics,
        constraints: ConstraintSet,
        coefficients: SurrogateCoefficients,
    ):
        self.name = name
        self.layout = layout
        self.catalog = tuple(catalog)
        self.burned = tuple(burned)
        self.n_fresh = int(n_fresh)
        self.tactics = tactics
        self.constraints = constraints
        self.coefficients = coefficients

        if not self.catalog:
            raise InstanceError("catalog is empty")
        ids = [b.id for b in self.burned]
        if len(set(ids)) != len(ids):
            raise InstanceError("burned assembly ids must be unique")
        for b in self.burned:
            if b.k_value <= 0 or b.bu0 < 0:
                raise InstanceError(f"burned assembly {b.id} needs k_value > 0 and bu0 >= 0")
            if b.burn_class not in ("once", "twice"):
                raise InstanceError(f"burned assembly {b.id} has burn_class {b.burn_class!r}")
        placed = sum(b.multiplicity for b in self.burned) + self.n_fresh
        if placed != layout.n_cells:
            raise InstanceError(
                f"inventory places {placed} assemblies but the core has {layout.n_cells} locations"
            )

        self._burned_pos = {b.id: g for g, b in enumerate(self.burned)}
        self.slot_specs = self._build_slot_specs()
        self._plan = self._build_plan()
        for m in sorted(self._initial_counters):
            if not self._feasible(self._initial_counters[m]):
                raise InstanceError(
                    f"inventory of multiplicity {m} cannot satisfy the active tactics"
                )

    @property
    def dim(self) -> int:
        return len(self.slot_specs)

    @property
    def bounds(self) -> Bounds:
        return Bounds.from_cardinalities([spec.cardinality for spec in self.slot_specs])

    def _twice_restricted(self, b: BurnedAssembly) -> bool:
        return b.burn_class == "twice" and self.tactics.twice_at_periphery

    def _build_slot_specs(self) -> tuple[SlotSpec, ...]:
        t = self.tactics
        for b in self.burned:
            if not any(
                s.multiplicity == b.multiplicity and s.location_class not in (CENTER,)
                for s in self.layout.slots
            ):
                raise InstanceError(f"no slot can hold {b.id} (multiplicity {b.multiplicity})")

        draft = []
        for slot in self.layout.slots:
            cls = slot.location_class
            periphery = cls == PERIPHERY
            fresh_allowed = not (periphery and t.no_fresh_at_periphery)
            fresh_only = cls == CENTER or (cls == RING and t.fresh_ring)
            choices: list[Assignment] = list(self.catalog) if fresh_allowed else []
            if not fresh_only:
                for b in self.burned:
                    if b.multiplicity != slot.multiplicity:
                        continue
                    if self._twice_restricted(b) and not periphery:
                        continue
                    choices.append(b)
            if not choices:
                raise InstanceError(f"slot {slot.cell} has no admissible choice")
            burnable = any(isinstance(c, BurnedAssembly) for c in choices)
            draft.append([slot, tuple(choices), fresh_allowed, burnable])

        breakers: set[int] = set()
        if t.no_fresh_square:
            layout = self.layout
            rc, cc = layout.n_rows // 2, layout.n_cols // 2
            for square in layout.squares:
                slots = [int(layout.slot_of_cell[i]) for i in square]
                if not all(draft[k][2] for k in slots):
                    continue
                if breakers.intersection(slots):
                    continue
                candidates = [(i, k) for i, k in zip(square, slots) if draft[k][3]]
                if not candidates:
                    cell = layout.cells[square[0]]
                    raise InstanceError(f"2x2 block at {cell} can never hold a burned assembly")
                odd = [
                    k
                    for i, k in candidates
                    if abs(layout.cells[i][0] - rc) % 2 == 1 and abs(layout.cells[i][1] - cc) % 2 == 1
                ]
                breakers.add(odd[0] if odd else candidates[0][1])

        return tuple(
            SlotSpec(slot, choices, fresh_allowed, burnable, slot.index in breakers)
            for slot, choices, fresh_allowed, burnable in draft
        )

    def _build_plan(self) -> list[tuple]:
        layout = self.layout
        live = [
            sq
            for sq in layout.squares
            if all(self.slot_specs[int(layout.slot_of_cell[i])].fresh_allowed for i in sq)
        ]
        plan = []
        counters: dict[int, _ClassCounters] = {}
        for spec in self.slot_specs:
            m = spec.slot.multiplicity
            periphery = spec.slot.location_class == PERIPHERY
            squares: tuple[tuple[int, ...], ...] = ()
            if spec.square_breaker:
                through = []
                orbit = set(spec.slot.orbit)
                for sq in live:
                    if orbit.intersection(sq):
                        others = tuple(
                            sorted({int(layout.slot_of_cell[i]) for i in sq} - {spec.slot.index})
                        )
                        through.append(others)
                squares = tuple(sorted(set(through)))
            burned_index = tuple(
                self._burned_pos[c.id] if isinstance(c, BurnedAssembly) else -1
                for c in spec.choices
            )
            plan.append((m, periphery, spec.burnable, spec.square_breaker, burned_index, squares))
            if spec.burnable:
                cnt = counters.setdefault(m, _ClassCounters())
                if periphery:
                    cnt.periphery += 1
                    cnt.breakers_periphery += spec.square_breaker
                else:
                    cnt.inner += 1
                    cnt.breakers_inner += spec.square_breaker
        for b in self.burned:
            cnt = counters.setdefault(b.multiplicity, _ClassCounters())
            if self._twice_restricted(b):
                cnt.twice += 1
            else:
                cnt.once += 1
        self._initial_counters = counters
        self._twice_flags = tuple(self._twice_restricted(b) for b in self.burned)
        return plan

    def _feasible(self, c: _ClassCounters) -> bool:
        """Can the remaining groups of one multiplicity still fill the remaining slots?"""
        lo = max(0, c.once - c.inner, c.breakers_periphery - c.twice)
        if self.tactics.no_fresh_at_periphery:
            lo = max(lo, c.periphery - c.twice)
        hi = min(c.once, c.periphery - c.twice, c.once - c.breakers_inner)
        return lo <= hi


def decode_reduced(v: Sequence[int], inst: ProblemInstance) -> list[Assignment]:
    """Per-slot assignment after repair, in traversal order."""
    if len(v) != inst.dim:
        raise DecodeError(f"decision vector has length {len(v)}, expected {inst.dim}")
    specs = inst.slot_specs
    for k, entry in enumerate(v):
        if not 0 <= int(entry) < specs[k].cardinality:
            raise DecodeError(
                f"entry {int(entry)} at slot {k} outside [0, {specs[k].cardinality})", slot=k
            )

    counters = {
        m: _ClassCounters(**vars(c)) for m, c in inst._initial_counters.items()
    }
    used = [False] * len(inst.burned)
    burned_slot = [False] * inst.dim
    twice = inst._twice_flags
    out: list[Assignment] = []

    for k, (m, periphery, burnable, breaker, burned_index, squares) in enumerate(inst._plan):
        cnt = counters.get(m)
        if burnable:
            if periphery:
                cnt.periphery -= 1
                cnt.breakers_periphery -= breaker
            else:
                cnt.inner -= 1
                cnt.breakers_inner -= breaker
        choices = specs[k].choices
        n = len(choices)
        start = int(v[k])
        taken = None
        for off in range(n):
            c = (start + off) % n
            g = burned_index[c]
            if g < 0:
                if breaker and not _square_guarded(k, squares, burned_slot, inst._plan):
                    continue
                if cnt is None or inst._feasible(cnt):
                    taken = c
                    break
            elif not used[g]:
                if twice[g]:
                    cnt.twice -= 1
                else:
                    cnt.once -= 1
                if inst._feasible(cnt):
                    used[g] = True
                    burned_slot[k] = True
                    taken = c
                    break
                if twice[g]:
                    cnt.twice += 1
                else:
                    cnt.once += 1
        if taken is None:
            raise DecodeError(f"no admissible choice left at slot {k}", slot=k)
        out.append(choices[taken])
    return out


def _square_guarded(k: int, squares, burned_slot: list[bool], plan) -> bool:
    """A breaker slot may go fresh only if every block through it stays broken."""
    for others in squares:
        if not any(
            (t < k and burned_slot[t]) or (t > k and plan[t][3]) for t in others
        ):
            return False
    return True


def decode(v: Sequence[int], inst: ProblemInstance) -> CoreMap:
    return symmetry_expand(decode_reduced(v, inst), inst.layout)


def symmetry_expand(reduced: Sequence[Assignment], layout: CoreLayout) -> CoreMap:
    if len(reduced) != len(layout.slots):
        raise DecodeError(
            f"reduced map has {len(reduced)} entries, expected {len(layout.slots)}"
        )
    full: list[Assignment | None] = [None] * layout.n_cells
    for slot, value in zip(layout.slots, reduced):
        for i in slot.orbit:
            full[i] = value
    return CoreMap(layout, tuple(full))


def restrict(core: CoreMap, layout: CoreLayout | None = None) -> tuple[Assignment, ...]:
    layout = layout or core.layout
    return tuple(core.assignment[layout.index[slot.cell]] for slot in layout.slots)


def check_tactics(core: CoreMap, inst: ProblemInstance) -> list[TacticViolation]:
    layout = inst.layout
    t = inst.tactics
    found: list[TacticViolation] = []
    for i, (cell, a) in enumerate(zip(layout.cells, core.assignment)):
        cls = layout.location_class[i]
        fresh = isinstance(a, FuelType)
        # structural rule of the layout, independent of the tactic flags
        if layout.center is not None and cell == layout.center and not fresh:
            found.append(TacticViolation("fresh_center", cell))
        if t.twice_at_periphery and not fresh and a.burn_class == "twice" and cls != PERIPHERY:
            found.append(TacticViolation("twice_at_periphery", cell))
        if t.no_fresh_at_periphery and fresh and cls == PERIPHERY:
            found.append(TacticViolation("no_fresh_at_periphery", cell))
        if t.fresh_ring and not fresh and cls == RING:
            found.append(TacticViolation("fresh_ring", cell))
    if t.no_fresh_square:
        for square in layout.squares:
            if all(isinstance(core.assignment[i], FuelType) for i in square):
                found.append(TacticViolation("no_fresh_square", layout.cells[square[0]]))
    return found


def search_space_size(inst: ProblemInstance) -> int:
    return math.prod(spec.cardinality for spec in inst.slot_specs)


def generate_inventory(
    once: Sequence[Sequence[int]], twice: Sequence[Sequence[int]] = ()
) -> list[BurnedAssembly]:
    """Synthetic burned inventory from ``[multiplicity, groups]`` pairs.

    Group ``j`` of a burn class (counted across the whole class, in the
    order given) gets ``k = 1.035 - 0.001 j, bu0 = 20 + 0.05 j`` when burned
    once and ``k = 0.955 - 0.001 j, bu0 = 40 + 0.1 j`` when burned twice.
    """
    inventory: list[BurnedAssembly] = []
    j = 0
    for multiplicity, count in once:
        for _ in range(int(count)):
            inventory.append(
                BurnedAssembly(f"O{j + 1:02d}", "once", round(1.035 - 0.001 * j, 6),
                               round(20 + 0.05 * j, 6), int(multiplicity))
            )
            j += 1
    j = 0
    for multiplicity, count in twice:
        for _ in range(int(count)):
            inventory.append(
                BurnedAssembly(f"T{j + 1:02d}", "twice", round(0.955 - 0.001 * j, 6),
                               round(40 + 0.1 * j, 6), int(multiplicity))
            )
            j += 1
    return inventory


def _parse_catalog(section: dict[str, Any]) -> list[FuelType]:
    if "types" in section:
        try:
            return [FuelType(float(e), int(i), int(w)) for e, i, w in section["types"]]
        except (TypeError, ValueError) as e:
            raise InstanceError(f"[catalog] types must be [enrichment, ifba, waba] triples: {e}") from e
    return build_catalog(
        section.get("enrichments", ENRICHMENTS),
        section.get("ifba", IFBA_LOADINGS),
        section.get("waba", WABA_PADS),
    )


def _parse_inventory(section: dict[str, Any]) -> list[BurnedAssembly]:
    inventory: list[BurnedAssembly] = []
    if "generate" in section:
        gen = section["generate"]
        inventory.extend(generate_inventory(gen.get("once", []), gen.get("twice", [])))
    for entry in section.get("assembly", []):
        try:
            inventory.append(
                BurnedAssembly(
                    str(entry["id"]),
                    entry["burn_class"],
                    float(entry["k_value"]),
                    float(entry["bu0"]),
                    int(entry.get("multiplicity", 1)),
                )
            )
        except KeyError as e:
            raise InstanceError(f"[[inventory.assembly]] is missing key {e}") from e
    return inventory


def instance_from_mapping(data: dict[str, Any], source: str = "<mapping>") -> ProblemInstance:
    from surrogate import ConstraintSet, SurrogateCoefficients

    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise InstanceError(f"{source}: unsupported schema_version {version!r}")
    for section in ("layout", "inventory"):
        if section not in data:
            raise InstanceError(f"{source}: missing [{section}] section")

    lay = data["layout"]
    grid = lay.get("grid")
    if isinstance(grid, str):
        grid = grid.splitlines()
    if not grid:
        raise InstanceError(f"{source}: [layout] needs a grid")
    center = lay.get("center", True)
    layout = CoreLayout(grid, lay.get("symmetry", "eighth"), center)

    catalog = _parse_catalog(data.get("catalog", {}))
    burned = _parse_inventory(data["inventory"])
    n_fresh = int(data.get("n_fresh", layout.n_cells - sum(b.multiplicity for b in burned)))

    tactic_keys = set(Tactics.__dataclass_fields__)
    raw_tactics = data.get("tactics", {})
    unknown = set(raw_tactics) - tactic_keys
    if unknown:
        raise InstanceError(f"{source}: unknown tactics {sorted(unknown)}")
    tactics = Tactics(**{k: bool(v) for k, v in raw_tactics.items()})

    constraints = ConstraintSet.from_mapping(data.get("constraints", {}))
    surrogate_section = dict(data.get("surrogate", {}))
    surrogate_section.pop("calibration_note", None)
    coefficients = SurrogateCoefficients.from_mapping(surrogate_section)

    inst = ProblemInstance(
        str(data.get("name", source)), layout, catalog, burned, n_fresh, tactics,
        constraints, coefficients,
    )
    logger.debug(
        "loaded %s: %d slots, %d burned groups, search space %.3g",
        inst.name, inst.dim, len(inst.burned), float(search_space_size(inst)),
    )
    return inst


def load_instance(path: str | Path) -> ProblemInstance:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as e:
        raise InstanceError(f"instance file not found: {path}") from e
    except tomllib.TOMLDecodeError as e:
        raise InstanceError(f"{path}: {e}") from e
    return instance_from_mapping(data, source=str(path))
