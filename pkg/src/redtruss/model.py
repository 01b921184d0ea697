"""Plane truss ground structures, designs and damage scenarios.

Internal units are N, mm and MPa (N/mm^2), so ``yield_stress * area`` is an
axial force in N and load factors are dimensionless.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

SCHEMA_VERSION = 1


class ModelError(ValueError):
    """Invalid ground structure, design or instance file."""


@dataclass(frozen=True)
class Node:
    id: int
    position: tuple[float, float]
    fixed_x: bool = False
    fixed_y: bool = False


@dataclass(frozen=True)
class Member:
    id: int
    end_a: int
    end_b: int


@dataclass(frozen=True)
class NodalLoad:
    node: int
    fx: float
    fy: float


@dataclass(frozen=True, eq=False)
class GroundStructure:
    """Nodes, candidate members, loads and yield stress of a plane truss.

    Loads are kept per node (in N); the assembled ``dead_load`` and
    ``reference_load`` vectors live on the free degrees of freedom.
    """

    nodes: tuple[Node, ...]
    members: tuple[Member, ...]
    dead_loads: tuple[NodalLoad, ...] = ()
    reference_loads: tuple[NodalLoad, ...] = ()
    yield_stress: float = 200.0
    name: str = ""
    dof_map: dict[tuple[int, int], int] = field(init=False, repr=False)
    lengths: np.ndarray = field(init=False, repr=False)
    columns: np.ndarray = field(init=False, repr=False)
    dead_load: np.ndarray = field(init=False, repr=False)
    reference_load: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not self.yield_stress > 0:
            raise ModelError("yield stress must be positive")
        for k, node in enumerate(self.nodes):
            if node.id != k:
                raise ModelError(f"node ids must be dense from 0; got {node.id} at position {k}")
            if not all(math.isfinite(v) for v in node.position):
                raise ModelError(f"node {node.id} has a non-finite position")
        pairs = set()
        for k, mem in enumerate(self.members):
            if mem.id != k:
                raise ModelError(f"member ids must be dense from 0; got {mem.id} at position {k}")
            for end in (mem.end_a, mem.end_b):
                if not 0 <= end < len(self.nodes):
                    raise ModelError(f"member {mem.id} references unknown node {end}")
            if mem.end_a == mem.end_b:
                raise ModelError(f"member {mem.id} connects node {mem.end_a} to itself")
            key = frozenset((mem.end_a, mem.end_b))
            if key in pairs:
                raise ModelError(f"member {mem.id} duplicates node pair {sorted(key)}")
            pairs.add(key)
        dof_map: dict[tuple[int, int], int] = {}
        for node in self.nodes:
            for direction, fixed in ((0, node.fixed_x), (1, node.fixed_y)):
                if not fixed:
                    dof_map[(node.id, direction)] = len(dof_map)
        object.__setattr__(self, "dof_map", dof_map)
        lengths, columns = _assemble(self.nodes, self.members, dof_map)
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "columns", columns)
        object.__setattr__(self, "dead_load", self._load_vector(self.dead_loads))
        object.__setattr__(self, "reference_load", self._load_vector(self.reference_loads))

    def _load_vector(self, loads: Iterable[NodalLoad]) -> np.ndarray:
        p = np.zeros(self.n_dof)
        for load in loads:
            if not 0 <= load.node < len(self.nodes):
                raise ModelError(f"load references unknown node {load.node}")
            for direction, value in ((0, load.fx), (1, load.fy)):
                if value == 0.0:
                    continue
                key = (load.node, direction)
                if key not in self.dof_map:
                    raise ModelError(f"load applied to fixed direction {direction} of node {load.node}")
                p[self.dof_map[key]] += value
        return p

    @property
    def n_members(self) -> int:
        return len(self.members)

    @property
    def n_dof(self) -> int:
        return len(self.dof_map)

    def digest(self) -> str:
        """Stable hash of the instance content (independent of ``name``)."""
        payload = instance_dict(self, Design(np.zeros(self.n_members), 0.0))
        for key in ("name", "volume_budget_mm3", "initial_areas_mm2"):
            payload.pop(key, None)
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _assemble(nodes: Sequence[Node], members: Sequence[Member], dof_map):
    m = len(members)
    lengths = np.empty(m)
    columns = np.zeros((len(dof_map), m))
    for i, mem in enumerate(members):
        pa = np.asarray(nodes[mem.end_a].position, dtype=float)
        pb = np.asarray(nodes[mem.end_b].position, dtype=float)
        e = pb - pa
        length = float(np.hypot(*e))
        if not length > 0:
            raise ModelError(f"member {mem.id} has zero length")
        lengths[i] = length
        e /= length
        for node, sign in ((mem.end_a, -1.0), (mem.end_b, 1.0)):
            for direction in (0, 1):
                row = dof_map.get((node, direction))
                if row is not None:
                    columns[row, i] = sign * e[direction]
    return lengths, columns


def equilibrium_columns(gs: GroundStructure) -> np.ndarray:
    """Equilibrium matrix (d x m); column i maps axial force q_i to nodal forces."""
    return gs.columns.copy()


@dataclass
class Design:
    """Member cross-sectional areas (mm^2) with a volume budget (mm^3)."""

    areas: np.ndarray
    volume_budget: float

    def __post_init__(self) -> None:
        self.areas = np.asarray(self.areas, dtype=float).copy()

    def check(self, gs: GroundStructure, rtol: float = 1e-9) -> None:
        if self.areas.shape != (gs.n_members,):
            raise ModelError(f"design has {self.areas.size} areas for {gs.n_members} members")
        if np.any(self.areas < 0):
            raise ModelError("design has negative areas")
        if volume(self.areas, gs) > self.volume_budget * (1 + rtol) + 1e-9:
            raise ModelError("design exceeds its volume budget")


@dataclass(frozen=True)
class DamageScenario:
    """Soundness indicator t (1 intact, 0 damaged) and damage degree gamma."""

    damaged: tuple[int, ...]
    n_members: int
    gamma: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma < 1.0:
            raise ModelError("damage degree must lie in [0, 1)")
        if len(set(self.damaged)) != len(self.damaged):
            raise ModelError("damaged member ids must be distinct")
        if any(not 0 <= i < self.n_members for i in self.damaged):
            raise ModelError("damaged member id out of range")
        object.__setattr__(self, "damaged", tuple(sorted(self.damaged)))

    @classmethod
    def from_indicator(cls, t: Sequence[int], gamma: float = 0.0) -> "DamageScenario":
        t = np.asarray(t)
        if not np.all((t == 0) | (t == 1)):
            raise ModelError("indicator entries must be 0 or 1")
        return cls(tuple(int(i) for i in np.flatnonzero(t == 0)), t.size, gamma)

    @property
    def t(self) -> np.ndarray:
        t = np.ones(self.n_members, dtype=int)
        t[list(self.damaged)] = 0
        return t


def apply_scenario(areas: np.ndarray, scenario: DamageScenario) -> np.ndarray:
    """Realised areas ``(t_i + gamma (1 - t_i)) x_i``."""
    areas = np.asarray(areas, dtype=float)
    if areas.size != scenario.n_members:
        raise ModelError("scenario and design sizes differ")
    out = areas.copy()
    idx = list(scenario.damaged)
    out[idx] = 0.0 if scenario.gamma == 0.0 else scenario.gamma * areas[idx]
    return out


def volume(areas, gs: GroundStructure) -> float:
    areas = np.asarray(areas, dtype=float)
    if areas.shape != (gs.n_members,):
        raise ModelError(f"expected {gs.n_members} areas, got {areas.size}")
    return float(gs.lengths @ areas)


# -- built-in examples -------------------------------------------------------

PANEL = 1000.0  # mm


def _grid_truss(reference_loads, dead_loads, name: str) -> GroundStructure:
    # node id = row * 4 + column; row 0 bottom, row 1 top
    def nid(col: int, row: int) -> int:
        return row * 4 + col

    nodes = tuple(
        Node(nid(col, row), (col * PANEL, row * PANEL), col == 0, col == 0)
        for row in (0, 1)
        for col in range(4)
    )
    pairs = []
    pairs += [(nid(i, 0), nid(i + 1, 0)) for i in range(3)]  # bottom chords
    pairs += [(nid(i, 1), nid(i + 1, 1)) for i in range(3)]  # top chords
    pairs += [(nid(i, 0), nid(i, 1)) for i in (1, 2, 3)]  # verticals
    for i in range(3):  # single-bay diagonals
        pairs += [(nid(i, 0), nid(i + 1, 1)), (nid(i, 1), nid(i + 1, 0))]
    for i in range(2):  # two-bay diagonals
        pairs += [(nid(i, 0), nid(i + 2, 1)), (nid(i, 1), nid(i + 2, 0))]
    members = tuple(Member(k, a, b) for k, (a, b) in enumerate(pairs))
    return GroundStructure(
        nodes, members,
        dead_loads=tuple(NodalLoad(nid(*key), fx, fy) for key, fx, fy in dead_loads),
        reference_loads=tuple(NodalLoad(nid(*key), fx, fy) for key, fx, fy in reference_loads),
        yield_stress=200.0,
        name=name,
    )


def builtin_example(name: str) -> tuple[GroundStructure, Design]:
    """The 19-member, 12-DOF cantilever truss with load case ``"I"`` or ``"II"``.

    I: 50 kN horizontal dead load at both tip nodes pointing towards the
    supports (-x), 10 kN downward reference load at the upper tip.
    II: no dead load, 50 kN horizontal reference load at both tip nodes.  Initial design is 1000 mm^2 everywhere and the volume
    budget equals its volume.
    """
    key = str(name).strip().upper()
    if key == "I":
        gs = _grid_truss(
            reference_loads=[((3, 1), 0.0, -10e3)],
            dead_loads=[((3, 0), -50e3, 0.0), ((3, 1), -50e3, 0.0)],
            name="example-I",
        )
    elif key == "II":
        gs = _grid_truss(
            reference_loads=[((3, 0), 50e3, 0.0), ((3, 1), 50e3, 0.0)],
            dead_loads=[],
            name="example-II",
        )
    else:
        raise ModelError(f"unknown built-in example {name!r}; choose I or II")
    x0 = np.full(gs.n_members, 1000.0)
    return gs, Design(x0, volume(x0, gs))


# -- instance files ----------------------------------------------------------

def instance_dict(gs: GroundStructure, design: Design) -> dict[str, Any]:
    def loads(items):
        return [{"node": ld.node, "fx_N": ld.fx, "fy_N": ld.fy} for ld in items]

    return {
        "schema_version": SCHEMA_VERSION,
        "name": gs.name,
        "nodes": [
            {"id": n.id, "x_mm": n.position[0], "y_mm": n.position[1],
             "fixed_x": n.fixed_x, "fixed_y": n.fixed_y}
            for n in gs.nodes
        ],
        "members": [{"id": m.id, "a": m.end_a, "b": m.end_b} for m in gs.members],
        "loads": {"dead": loads(gs.dead_loads), "reference": loads(gs.reference_loads)},
        "yield_stress_mpa": gs.yield_stress,
        "volume_budget_mm3": float(design.volume_budget),
        "initial_areas_mm2": [float(a) for a in design.areas],
    }


def dump_instance(gs: GroundStructure, design: Design, path: str | Path) -> None:
    text = json.dumps(instance_dict(gs, design), indent=2)
    Path(path).write_text(text + "\n", encoding="utf-8")


def _need(obj: dict, key: str, where: str):
    if key not in obj:
        raise ModelError(f"{where}: missing field {key!r}")
    return obj[key]


def instance_from_dict(data: dict[str, Any]) -> tuple[GroundStructure, Design]:
    if not isinstance(data, dict):
        raise ModelError("instance: top level must be an object")
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ModelError(f"instance: unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    try:
        nodes = tuple(
            Node(int(_need(n, "id", f"nodes[{k}]")),
                 (float(_need(n, "x_mm", f"nodes[{k}]")), float(_need(n, "y_mm", f"nodes[{k}]"))),
                 bool(n.get("fixed_x", False)), bool(n.get("fixed_y", False)))
            for k, n in enumerate(_need(data, "nodes", "instance"))
        )
        members = tuple(
            Member(int(_need(m, "id", f"members[{k}]")),
                   int(_need(m, "a", f"members[{k}]")), int(_need(m, "b", f"members[{k}]")))
            for k, m in enumerate(_need(data, "members", "instance"))
        )
        load_block = data.get("loads", {})

        def loads(kind):
            return tuple(
                NodalLoad(int(_need(ld, "node", f"loads.{kind}[{k}]")),
                          float(ld.get("fx_N", 0.0)), float(ld.get("fy_N", 0.0)))
                for k, ld in enumerate(load_block.get(kind, []))
            )

        gs = GroundStructure(
            nodes, members, loads("dead"), loads("reference"),
            yield_stress=float(_need(data, "yield_stress_mpa", "instance")),
            name=str(data.get("name", "")),
        )
        areas = np.asarray(_need(data, "initial_areas_mm2", "instance"), dtype=float)
        if areas.shape != (gs.n_members,):
            raise ModelError(f"initial_areas_mm2: expected {gs.n_members} entries, got {areas.size}")
        budget = data.get("volume_budget_mm3")
        budget = volume(areas, gs) if budget is None else float(budget)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ModelError):
            raise
        raise ModelError(f"instance: {exc}") from exc
    return gs, Design(areas, budget)


def load_instance(path: str | Path) -> tuple[GroundStructure, Design]:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    try:
        return instance_from_dict(data)
    except ModelError as exc:
        raise ModelError(f"{path}: {exc}") from exc
