"""Random desk-scale instances for invariant sweeps.

Instances are built the same way as circuit models: a random healthy
sensor table is corrupted by persistent faults on one sensor.
"""

from __future__ import annotations

import numpy as np

from activediag.faults import FaultSpec, Flip, HealthyTable, SensorFaults, StuckAt, compile_model
from activediag.model import DiagnosisModel

_KINDS = (Flip(), StuckAt(0), StuckAt(1))


def random_fault_model(
    rng: np.random.Generator,
    *,
    max_states: int = 6,
    max_modes: int = 3,
    max_actions: int = 4,
    max_sensors: int = 2,
    n_modes: int | None = None,
    uniform_modes: bool = False,
    state_dependent: bool | None = None,
) -> DiagnosisModel:
    """Random model with ``|X| <= max_states``, ``|Q| <= max_modes`` (at most 3),
    ``|V| <= max_actions`` and binary sensors.

    ``uniform_modes`` gives every mode the same conditional probability, so
    ``P[x, q] = P[x] / |Q|``.
    """
    nx = int(rng.integers(2, max_states + 1))
    nv = int(rng.integers(1, max_actions + 1))
    m = int(rng.integers(1, max_sensors + 1))
    nq = int(rng.integers(1, min(max_modes, 3) + 1)) if n_modes is None else n_modes
    if not 1 <= nq <= 3:
        raise ValueError("random models support 1 to 3 modes")

    states = tuple(f"x{i}" for i in range(nx))
    actions = tuple(f"v{i}" for i in range(nv))
    sensors = tuple(f"s{i}" for i in range(m))
    readings = rng.integers(0, 2, size=(nv, nx, m))
    table = HealthyTable(states, actions, sensors, readings)

    faults = ()
    if nq > 1:
        sensor = sensors[int(rng.integers(m))]
        kinds = tuple(_KINDS[i] for i in sorted(rng.choice(len(_KINDS), size=nq - 1, replace=False)))
        if state_dependent is None:
            state_dependent = bool(rng.random() < 0.3)
        probs = []
        for _ in kinds:
            if uniform_modes:
                probs.append(1.0 / nq)
            elif state_dependent:
                probs.append({x: float(rng.uniform(0.02, 0.98 / (nq - 1))) for x in states})
            else:
                probs.append(float(rng.uniform(0.02, 0.98 / (nq - 1))))
        faults = (SensorFaults(sensor, kinds, tuple(probs)),)
    spec = FaultSpec(sensors, faults)

    if uniform_modes or rng.random() < 0.3:
        weights = np.full(nx, 1.0 / nx)
    else:
        weights = rng.dirichlet(np.ones(nx))
    prior = dict(zip(states, weights.tolist()))
    return compile_model(table, spec, prior)


def random_models(seed: int, count: int, **kw) -> list[DiagnosisModel]:
    rng = np.random.default_rng(seed)
    return [random_fault_model(rng, **kw) for _ in range(count)]
