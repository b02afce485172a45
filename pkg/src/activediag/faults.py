"""Persistent sensor faults: mode enumeration, corruption, preimages, priors.

A sensor mode assigns one fault kind to every sensor.  Kinds are
``Healthy`` (identity), ``Flip`` (always reports the complement) and
``StuckAt(c)`` (always reports ``c``).  Compiling a healthy outcome function
with a :class:`FaultSpec` gives a :class:`~activediag.model.DiagnosisModel`
whose modes are all combinations of per-sensor kinds.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np

from activediag.errors import ModelError, SizeCapError
from activediag.model import PROB_ATOL, DiagnosisModel

MAX_MODES = 2**20

Probability = Union[float, Mapping[str, float]]


@dataclass(frozen=True)
class Healthy:
    label = "H"

    def apply(self, y: int) -> int:
        return y

    def preimage(self, y: int, alphabet: int) -> tuple[int, ...]:
        return (y,)


@dataclass(frozen=True)
class Flip:
    label = "F"

    def apply(self, y: int) -> int:
        return 1 - y

    def preimage(self, y: int, alphabet: int) -> tuple[int, ...]:
        return (1 - y,)


@dataclass(frozen=True)
class StuckAt:
    value: int

    @property
    def label(self) -> str:
        return f"S{self.value}"

    def apply(self, y: int) -> int:
        return self.value

    def preimage(self, y: int, alphabet: int) -> tuple[int, ...]:
        return tuple(range(alphabet)) if y == self.value else ()


FaultKind = Union[Healthy, Flip, StuckAt]
HEALTHY = Healthy()


@dataclass(frozen=True)
class SensorFaults:
    """Admissible fault kinds of one fault-prone sensor and their ``P[kind | x]``.

    A probability is either a number (state independent) or a mapping from
    state id to number; a mapping may carry a ``"default"`` entry.
    """

    sensor: str
    kinds: tuple[FaultKind, ...]
    probabilities: tuple[Probability, ...]

    def probability(self, j: int, state: str) -> float:
        p = self.probabilities[j]
        if isinstance(p, Mapping):
            if state in p:
                return float(p[state])
            if "default" in p:
                return float(p["default"])
            raise ModelError(f"sensor {self.sensor}: no {self.kinds[j].label} probability for state {state!r}")
        return float(p)


@dataclass(frozen=True)
class FaultSpec:
    """Fault kinds for an ordered list of sensors over a finite alphabet."""

    sensors: tuple[str, ...]
    faults: tuple[SensorFaults, ...] = ()
    alphabet: int = 2
    _by_sensor: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.sensors:
            raise ModelError("fault spec needs at least one sensor")
        if len(set(self.sensors)) != len(self.sensors):
            raise ModelError("duplicate sensor identifiers in fault spec")
        if self.alphabet < 2:
            raise ModelError("sensor alphabet needs at least two symbols")
        by_sensor = {}
        for sf in self.faults:
            if sf.sensor not in self.sensors:
                raise ModelError(f"fault spec names unknown sensor {sf.sensor!r}")
            if sf.sensor in by_sensor:
                raise ModelError(f"sensor {sf.sensor!r} listed twice in fault spec")
            if len(sf.kinds) != len(sf.probabilities):
                raise ModelError(f"sensor {sf.sensor}: one probability per fault kind required")
            if len(set(sf.kinds)) != len(sf.kinds):
                raise ModelError(f"sensor {sf.sensor}: repeated fault kind")
            for kind in sf.kinds:
                if isinstance(kind, Flip) and self.alphabet != 2:
                    raise ModelError(f"sensor {sf.sensor}: flip faults need a binary alphabet")
                if isinstance(kind, StuckAt) and not 0 <= kind.value < self.alphabet:
                    raise ModelError(f"sensor {sf.sensor}: stuck-at value {kind.value} outside alphabet")
                if isinstance(kind, Healthy):
                    raise ModelError(f"sensor {sf.sensor}: healthy is implicit, do not list it")
            constant = [p for p in sf.probabilities if not isinstance(p, Mapping)]
            if len(constant) == len(sf.probabilities) and (min(constant, default=0) < 0 or sum(constant) > 1 + PROB_ATOL):
                raise ModelError(f"sensor {sf.sensor}: fault probabilities must be nonnegative and sum to at most 1")
            by_sensor[sf.sensor] = sf
        object.__setattr__(self, "_by_sensor", by_sensor)

    @property
    def sensor_count(self) -> int:
        return len(self.sensors)

    def sensor_faults(self, sensor: str) -> SensorFaults | None:
        return self._by_sensor.get(sensor)

    def admissible(self, i: int) -> tuple[FaultKind, ...]:
        sf = self._by_sensor.get(self.sensors[i])
        return (HEALTHY,) + (sf.kinds if sf else ())

    def mode_count(self) -> int:
        return math.prod(len(self.admissible(i)) for i in range(self.sensor_count))

    def kind_probabilities(self, i: int, state: str) -> tuple[float, ...]:
        """``P[kind | x]`` for the admissible kinds of sensor ``i``, healthy first."""
        sf = self._by_sensor.get(self.sensors[i])
        if sf is None:
            return (1.0,)
        faulty = [sf.probability(j, state) for j in range(len(sf.kinds))]
        if any(p < 0 or p > 1 for p in faulty):
            raise ModelError(f"sensor {sf.sensor}: fault probability outside [0, 1] for state {state!r}")
        healthy = 1.0 - sum(faulty)
        if healthy < -PROB_ATOL:
            raise ModelError(f"sensor {sf.sensor}: fault probabilities exceed 1 for state {state!r}")
        return (max(healthy, 0.0), *faulty)

    @classmethod
    def from_config(cls, entries: Sequence[dict], sensors: Sequence[str], alphabet: int = 2) -> "FaultSpec":
        """Parse the ``faults`` section of an experiment config.

        Each entry looks like
        ``{"sensor": "S2", "kinds": [{"flip": 0.2}, {"stuck_at": {"value": 1, "p": 0.4}}]}``.
        """
        faults = []
        for i, entry in enumerate(entries):
            where = f"faults[{i}]"
            if not isinstance(entry, dict) or "sensor" not in entry or "kinds" not in entry:
                raise ModelError(f"{where}: expected an object with 'sensor' and 'kinds'")
            kinds, probs = [], []
            for j, k in enumerate(entry["kinds"]):
                if not isinstance(k, dict) or len(k) != 1:
                    raise ModelError(f"{where}.kinds[{j}]: expected a single-key object")
                (name, body), = k.items()
                if name == "flip":
                    kinds.append(Flip())
                    probs.append(_parse_probability(body, f"{where}.kinds[{j}]"))
                elif name == "stuck_at":
                    if not isinstance(body, dict) or "value" not in body or "p" not in body:
                        raise ModelError(f"{where}.kinds[{j}]: stuck_at needs 'value' and 'p'")
                    kinds.append(StuckAt(int(body["value"])))
                    probs.append(_parse_probability(body["p"], f"{where}.kinds[{j}]"))
                else:
                    raise ModelError(f"{where}.kinds[{j}]: unknown fault kind {name!r}")
            faults.append(SensorFaults(str(entry["sensor"]), tuple(kinds), tuple(probs)))
        return cls(tuple(str(s) for s in sensors), tuple(faults), alphabet)

    def to_config(self) -> list[dict]:
        out = []
        for sf in self.faults:
            kinds = []
            for kind, p in zip(sf.kinds, sf.probabilities):
                p = dict(p) if isinstance(p, Mapping) else p
                if isinstance(kind, Flip):
                    kinds.append({"flip": p})
                else:
                    kinds.append({"stuck_at": {"value": kind.value, "p": p}})
            out.append({"sensor": sf.sensor, "kinds": kinds})
        return out


def _parse_probability(p, where) -> Probability:
    if isinstance(p, dict):
        return {str(k): float(v) for k, v in p.items()}
    try:
        return float(p)
    except (TypeError, ValueError):
        raise ModelError(f"{where}: probability {p!r} is not a number") from None


def uniform_spec(sensors: Sequence[str], fault_prone: Sequence[str], p_flip: float | None, p_stuck: Mapping[int, float] | None = None) -> FaultSpec:
    """Same kinds and probabilities on every fault-prone sensor."""
    faults = []
    for s in fault_prone:
        kinds, probs = [], []
        if p_flip is not None:
            kinds.append(Flip())
            probs.append(p_flip)
        for c, p in (p_stuck or {}).items():
            kinds.append(StuckAt(c))
            probs.append(p)
        faults.append(SensorFaults(s, tuple(kinds), tuple(probs)))
    return FaultSpec(tuple(sensors), tuple(faults))


@dataclass(frozen=True)
class SensorMode:
    """One fault kind per sensor."""

    kinds: tuple[FaultKind, ...]

    def __len__(self):
        return len(self.kinds)

    @property
    def label(self) -> str:
        return "|".join(k.label for k in self.kinds)

    @classmethod
    def parse(cls, label: str) -> "SensorMode":
        kinds = []
        for code in label.split("|"):
            if code == "H":
                kinds.append(HEALTHY)
            elif code == "F":
                kinds.append(Flip())
            elif code.startswith("S") and code[1:].isdigit():
                kinds.append(StuckAt(int(code[1:])))
            else:
                raise ModelError(f"bad mode label {label!r}")
        return cls(tuple(kinds))


def enumerate_modes(spec: FaultSpec, max_modes: int = MAX_MODES) -> list[SensorMode]:
    """All modes, lexicographic in the per-sensor kind order (healthy first)."""
    n = spec.mode_count()
    if n > max_modes:
        raise SizeCapError(f"{n} sensor modes exceed the cap of {max_modes}")
    per_sensor = [spec.admissible(i) for i in range(spec.sensor_count)]
    return [SensorMode(tuple(combo)) for combo in itertools.product(*per_sensor)]


def corrupt(q: SensorMode, y_healthy: Sequence[int]) -> tuple[int, ...]:
    """What the sensors report under mode ``q`` when the healthy reading is ``y_healthy``."""
    if len(y_healthy) != len(q):
        raise ModelError(f"outcome has {len(y_healthy)} components, mode has {len(q)}")
    return tuple(k.apply(int(y)) for k, y in zip(q.kinds, y_healthy))


def preimage(q: SensorMode, y_faulty: Sequence[int], alphabet: int = 2) -> set[tuple[int, ...]]:
    """All healthy readings that mode ``q`` turns into ``y_faulty``; possibly empty."""
    if len(y_faulty) != len(q):
        raise ModelError(f"outcome has {len(y_faulty)} components, mode has {len(q)}")
    parts = [k.preimage(int(y), alphabet) for k, y in zip(q.kinds, y_faulty)]
    return set(itertools.product(*parts))


def faulty_compatible_states(healthy_D: Mapping, q: SensorMode, y: Sequence[int], alphabet: int = 2) -> set:
    """``D(y, v, q)``: union of the healthy compatibility sets over the preimage of ``y``.

    ``healthy_D`` maps each healthy outcome vector (a tuple) to the set of
    states producing it under a fixed action; vectors absent from the map
    correspond to empty sets.
    """
    out = set()
    for y_prime in preimage(q, y, alphabet):
        out |= set(healthy_D.get(tuple(y_prime), ()))
    return out


def build_joint_prior(state_prior: Mapping[str, float], spec: FaultSpec, modes: Sequence[SensorMode] | None = None) -> np.ndarray:
    """``P[x, q] = P[x] * prod_i P[q_i | x]`` as an ``(|X|, |Q|)`` array.

    Rows follow the iteration order of ``state_prior``; columns follow
    ``modes`` (default: :func:`enumerate_modes`).
    """
    probs = np.array([float(p) for p in state_prior.values()])
    if np.any(probs < 0) or not np.all(np.isfinite(probs)):
        raise ModelError("state prior has negative or non-finite entries")
    if abs(probs.sum() - 1.0) > PROB_ATOL:
        raise ModelError(f"state prior sums to {probs.sum()!r}, expected 1")
    if modes is None:
        modes = enumerate_modes(spec)
    joint = np.empty((len(probs), len(modes)))
    for xi, state in enumerate(state_prior):
        per_sensor = []
        for i in range(spec.sensor_count):
            kinds = spec.admissible(i)
            per_sensor.append(dict(zip(kinds, spec.kind_probabilities(i, str(state)))))
        for qi, mode in enumerate(modes):
            p = probs[xi]
            for i, kind in enumerate(mode.kinds):
                p *= per_sensor[i][kind]
            joint[xi, qi] = p
    return joint


@dataclass(frozen=True, eq=False)
class HealthyTable:
    """Healthy outcome function ``mu_bar(v, x)`` as an integer array ``(|V|, |X|, m)``."""

    states: tuple[str, ...]
    actions: tuple[str, ...]
    sensors: tuple[str, ...]
    readings: np.ndarray
    alphabet: int = 2

    def __post_init__(self):
        r = np.asarray(self.readings)
        if r.shape != (len(self.actions), len(self.states), len(self.sensors)):
            raise ModelError(f"healthy readings have shape {r.shape}")
        if r.size and (r.min() < 0 or r.max() >= self.alphabet):
            raise ModelError("healthy reading outside the sensor alphabet")

    def healthy_partition(self, v: int) -> dict[tuple[int, ...], set[str]]:
        """``{y: D_bar(y, v)}`` for action index ``v``."""
        out: dict[tuple[int, ...], set[str]] = {}
        for xi, state in enumerate(self.states):
            out.setdefault(tuple(int(c) for c in self.readings[v, xi]), set()).add(state)
        return out


def outcome_labels(m: int, alphabet: int = 2) -> list[str]:
    digits = "0123456789abcdefghijklmnopqrstuvwxyz"[:alphabet]
    return ["".join(p) for p in itertools.product(digits, repeat=m)]


def compile_model(source, spec: FaultSpec, state_prior: Mapping[str, float] | None = None) -> DiagnosisModel:
    """Corrupt a healthy outcome function with every sensor mode of ``spec``.

    ``source`` is a :class:`HealthyTable` or anything with a
    ``healthy_table()`` method (e.g. a circuit).  The state prior defaults to
    uniform.  Outcomes are all ``alphabet**m`` sensor vectors, labelled by
    their digit strings with the first sensor leftmost.
    """
    table = source.healthy_table() if hasattr(source, "healthy_table") else source
    if tuple(spec.sensors) != tuple(table.sensors):
        raise ModelError(f"fault spec sensors {spec.sensors} do not match {table.sensors}")
    if spec.alphabet != table.alphabet:
        raise ModelError("fault spec and healthy table disagree on the sensor alphabet")
    if state_prior is None:
        state_prior = {x: 1.0 / len(table.states) for x in table.states}
    elif list(state_prior) != list(table.states):
        raise ModelError("state prior must list the states in table order")

    modes = enumerate_modes(spec)
    prior = build_joint_prior(state_prior, spec, modes)
    m, a = len(table.sensors), table.alphabet
    weights = a ** np.arange(m - 1, -1, -1)
    readings = np.asarray(table.readings, dtype=np.int64)
    out = np.empty((len(table.actions), len(table.states), len(modes)), dtype=np.int64)
    for qi, mode in enumerate(modes):
        corrupted = readings.copy()
        for i, kind in enumerate(mode.kinds):
            if isinstance(kind, Flip):
                corrupted[..., i] = 1 - readings[..., i]
            elif isinstance(kind, StuckAt):
                corrupted[..., i] = kind.value
        out[:, :, qi] = corrupted @ weights
    return DiagnosisModel(
        table.states, [q.label for q in modes], table.actions, outcome_labels(m, a), prior, out
    )


def outcome_vector(label: str) -> tuple[int, ...]:
    return tuple(int(c, 36) for c in label)
