"""Contactor circuits and their healthy sensor readings.

A sensor reads 1 (proper voltage) when its node is connected to a working
generator through conducting elements.  Closed contactors conduct, open ones
do not; any health-unknown element conducts only while healthy, and a faulty
generator supplies nothing.

Encodings, all in file declaration order:

* action label: one character per controllable contactor, ``1`` = closed;
* state label: one character per health-unknown element (generators, then
  components, then contactors), ``1`` = healthy;
* outcome: one character per sensor, ``1`` = proper voltage.

Labels enumerate in ``itertools.product("01", ...)`` order, so index ``i``
is the binary number spelled by the label.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from activediag.errors import ModelError
from activediag.faults import FaultSpec, HealthyTable

_ELEMENT_KEYS = ("generators", "components", "contactors", "sensors")


@dataclass(frozen=True)
class Generator:
    id: str
    node: str
    health_unknown: bool = False


@dataclass(frozen=True)
class Component:
    id: str
    a: str
    b: str
    health_unknown: bool = False


@dataclass(frozen=True)
class Contactor:
    id: str
    a: str
    b: str
    controllable: bool = True
    health_unknown: bool = False
    closed: bool = True  # position of a fixed contactor


@dataclass(frozen=True)
class Sensor:
    id: str
    node: str
    fault_prone: bool = False


@dataclass(frozen=True)
class CircuitModel:
    name: str
    nodes: tuple[str, ...]
    generators: tuple[Generator, ...]
    components: tuple[Component, ...]
    contactors: tuple[Contactor, ...]
    sensors: tuple[Sensor, ...]

    def __post_init__(self):
        if not self.components:
            raise ModelError(f"circuit {self.name!r}: component list is empty")
        if not self.generators:
            raise ModelError(f"circuit {self.name!r}: no generators")
        if not self.sensors:
            raise ModelError(f"circuit {self.name!r}: no sensors")
        if len(set(self.nodes)) != len(self.nodes):
            dup = next(n for n in self.nodes if self.nodes.count(n) > 1)
            raise ModelError(f"circuit {self.name!r}: duplicate node {dup!r}")
        nodes = set(self.nodes)
        seen = set()
        for el in (*self.generators, *self.components, *self.contactors, *self.sensors):
            if el.id in seen or el.id in nodes:
                raise ModelError(f"circuit {self.name!r}: duplicate identifier {el.id!r}")
            seen.add(el.id)
            ends = (el.node,) if hasattr(el, "node") else (el.a, el.b)
            for n in ends:
                if n not in nodes:
                    raise ModelError(f"circuit {self.name!r}: element {el.id!r} references undeclared node {n!r}")
        # connectivity with every element conducting
        parent = {n: n for n in self.nodes}

        def find(n):
            while parent[n] != n:
                parent[n] = parent[parent[n]]
                n = parent[n]
            return n

        for el in (*self.components, *self.contactors):
            parent[find(el.a)] = find(el.b)
        roots = {find(n) for n in self.nodes}
        if len(roots) > 1:
            root0 = find(self.nodes[0])
            stray = sorted(n for n in self.nodes if find(n) != root0)
            raise ModelError(f"circuit {self.name!r}: not connected, nodes {stray} are isolated from {self.nodes[0]!r}")

    # -- encodings --------------------------------------------------------

    @property
    def controllable(self) -> tuple[Contactor, ...]:
        return tuple(c for c in self.contactors if c.controllable)

    @property
    def health_unknown(self) -> tuple[str, ...]:
        return tuple(
            el.id for el in (*self.generators, *self.components, *self.contactors) if el.health_unknown
        )

    @property
    def sensor_ids(self) -> tuple[str, ...]:
        return tuple(s.id for s in self.sensors)

    @property
    def fault_prone_sensors(self) -> tuple[str, ...]:
        return tuple(s.id for s in self.sensors if s.fault_prone)

    def action_labels(self) -> list[str]:
        return ["".join(b) for b in itertools.product("01", repeat=len(self.controllable))]

    def state_labels(self) -> list[str]:
        return ["".join(b) for b in itertools.product("01", repeat=len(self.health_unknown))]

    def _bits(self, value, width: int, what: str) -> tuple[int, ...]:
        if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
            if not 0 <= value < 2**width:
                raise ModelError(f"{what} index {value} out of range for {width} bits")
            return tuple((int(value) >> (width - 1 - i)) & 1 for i in range(width))
        if isinstance(value, str):
            if len(value) != width or set(value) - {"0", "1"}:
                raise ModelError(f"{what} {value!r} is not a {width}-bit string")
            return tuple(int(c) for c in value)
        bits = tuple(int(b) for b in value)
        if len(bits) != width or any(b not in (0, 1) for b in bits):
            raise ModelError(f"{what} must have {width} binary entries, got {value!r}")
        return bits

    # -- simulation -------------------------------------------------------

    def evaluate_sensors(self, action, x) -> tuple[int, ...]:
        """Healthy sensor readings for a contactor assignment and a health assignment."""
        closed = dict(zip((c.id for c in self.controllable), self._bits(action, len(self.controllable), "action")))
        healthy = dict(zip(self.health_unknown, self._bits(x, len(self.health_unknown), "state")))

        adj: dict[str, list[str]] = {n: [] for n in self.nodes}
        for comp in self.components:
            if healthy.get(comp.id, 1):
                adj[comp.a].append(comp.b)
                adj[comp.b].append(comp.a)
        for c in self.contactors:
            is_closed = closed[c.id] if c.controllable else c.closed
            if is_closed and healthy.get(c.id, 1):
                adj[c.a].append(c.b)
                adj[c.b].append(c.a)

        live = set()
        stack = [g.node for g in self.generators if healthy.get(g.id, 1)]
        while stack:
            n = stack.pop()
            if n in live:
                continue
            live.add(n)
            stack.extend(adj[n])
        return tuple(int(s.node in live) for s in self.sensors)

    def healthy_table(self) -> HealthyTable:
        actions, states = self.action_labels(), self.state_labels()
        readings = np.empty((len(actions), len(states), len(self.sensors)), dtype=np.int64)
        for vi, v in enumerate(actions):
            for xi, x in enumerate(states):
                readings[vi, xi] = self.evaluate_sensors(v, x)
        return HealthyTable(tuple(states), tuple(actions), self.sensor_ids, readings)

    def fault_spec(self, p_flip: float = 0.2, p_stuck_one: float = 0.4) -> FaultSpec:
        """Flip and stuck-at-1 faults on every fault-prone sensor."""
        from activediag.faults import uniform_spec

        return uniform_spec(self.sensor_ids, self.fault_prone_sensors, p_flip, {1: p_stuck_one})

    # -- serialization ----------------------------------------------------

    @classmethod
    def from_dict(cls, doc: dict, name: str = "circuit") -> "CircuitModel":
        if not isinstance(doc, dict):
            raise ModelError(f"circuit {name!r}: top level must be an object")
        if "nodes" not in doc or not isinstance(doc["nodes"], list):
            raise ModelError(f"circuit {name!r}: missing 'nodes' list")
        parsed = {}
        builders = {
            "generators": lambda e: Generator(str(e["id"]), str(e["node"]), bool(e.get("health_unknown", False))),
            "components": lambda e: Component(str(e["id"]), str(e["from"]), str(e["to"]), bool(e.get("health_unknown", False))),
            "contactors": lambda e: Contactor(
                str(e["id"]), str(e["from"]), str(e["to"]),
                bool(e.get("controllable", True)), bool(e.get("health_unknown", False)), bool(e.get("closed", True)),
            ),
            "sensors": lambda e: Sensor(str(e["id"]), str(e["node"]), bool(e.get("fault_prone", False))),
        }
        for key in _ELEMENT_KEYS:
            items = doc.get(key, [])
            if not isinstance(items, list):
                raise ModelError(f"circuit {name!r}: {key!r} must be a list")
            out = []
            for i, e in enumerate(items):
                try:
                    out.append(builders[key](e))
                except (KeyError, TypeError) as exc:
                    raise ModelError(f"circuit {name!r}: {key}[{i}] is missing field {exc}") from None
            parsed[key] = tuple(out)
        return cls(str(doc.get("name", name)), tuple(str(n) for n in doc["nodes"]), **parsed)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "nodes": list(self.nodes),
            "generators": [{"id": g.id, "node": g.node, "health_unknown": g.health_unknown} for g in self.generators],
            "components": [
                {"id": c.id, "from": c.a, "to": c.b, "health_unknown": c.health_unknown} for c in self.components
            ],
            "contactors": [
                {"id": c.id, "from": c.a, "to": c.b, "controllable": c.controllable,
                 "health_unknown": c.health_unknown, "closed": c.closed}
                for c in self.contactors
            ],
            "sensors": [{"id": s.id, "node": s.node, "fault_prone": s.fault_prone} for s in self.sensors],
        }


def load_circuit(path) -> CircuitModel:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return CircuitModel.from_dict(doc, name=path.stem)


def small_circuit_path() -> Path:
    """Path of the shipped 13-element reconstruction circuit."""
    return Path(str(resources.files("activediag") / "data" / "small_circuit.json"))


def small_circuit() -> CircuitModel:
    return load_circuit(small_circuit_path())


def with_fault_prone(circuit: CircuitModel, sensors: Sequence[str]) -> CircuitModel:
    """Copy of ``circuit`` where exactly ``sensors`` are fault-prone."""
    unknown = set(sensors) - set(circuit.sensor_ids)
    if unknown:
        raise ModelError(f"unknown sensors {sorted(unknown)}")
    doc = circuit.to_dict()
    for s in doc["sensors"]:
        s["fault_prone"] = s["id"] in sensors
    return CircuitModel.from_dict(doc, circuit.name)
