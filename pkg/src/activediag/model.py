"""Diagnosis problem instances, version-space beliefs, posterior and reward.

A :class:`DiagnosisModel` is a finite table: states ``X`` (the groups to be
identified), modes ``Q`` (objects inside each group, e.g. sensor fault
modes), actions ``V`` and outcomes ``Y``, a joint prior ``P[x, q]`` and a
deterministic outcome table ``mu(v, x, q)``.

Internally everything is index based.  Version spaces are boolean rows of
width ``|X|``, one row per mode, so intersections and unions are single
vectorized operations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from activediag.errors import ContradictionError, ModelError, UnknownIdentifierError

PROB_ATOL = 1e-9


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class DiagnosisModel:
    """A finite group-based diagnosis instance.

    Parameters
    ----------
    states, modes, actions, outcomes:
        Ordered identifier lists.  Identifiers are stored as strings.
    prior:
        Array of shape ``(|X|, |Q|)`` holding ``P[x, q]``.
    outcome_table:
        Integer array of shape ``(|V|, |X|, |Q|)``; entry ``[v, x, q]`` is the
        index into ``outcomes`` of ``mu(v, x, q)``.
    """

    def __init__(
        self,
        states: Sequence,
        modes: Sequence,
        actions: Sequence,
        outcomes: Sequence,
        prior,
        outcome_table,
    ):
        self.states = tuple(str(s) for s in states)
        self.modes = tuple(str(q) for q in modes)
        self.actions = tuple(str(v) for v in actions)
        self.outcomes = tuple(str(y) for y in outcomes)
        self._index = {}
        for kind, ids in (
            ("state", self.states),
            ("mode", self.modes),
            ("action", self.actions),
            ("outcome", self.outcomes),
        ):
            if not ids:
                raise ModelError(f"model has no {kind}s")
            lookup = {}
            for i, ident in enumerate(ids):
                if ident in lookup:
                    raise ModelError(f"duplicate {kind} identifier {ident!r}")
                lookup[ident] = i
            self._index[kind] = lookup

        nx, nq, nv, ny = len(self.states), len(self.modes), len(self.actions), len(self.outcomes)
        prior = np.array(prior, dtype=float)
        if prior.shape != (nx, nq):
            raise ModelError(f"prior has shape {prior.shape}, expected {(nx, nq)}")
        if not np.all(np.isfinite(prior)) or np.any(prior < 0) or np.any(prior > 1):
            raise ModelError("prior entries must lie in [0, 1]")
        total = float(prior.sum())
        if abs(total - 1.0) > PROB_ATOL:
            raise ModelError(f"prior sums to {total!r}, expected 1")

        table = np.array(outcome_table)
        if table.shape != (nv, nx, nq):
            raise ModelError(f"outcome table has shape {table.shape}, expected {(nv, nx, nq)}")
        if not np.issubdtype(table.dtype, np.integer):
            raise ModelError("outcome table must hold outcome indices")
        if table.size and (table.min() < 0 or table.max() >= ny):
            raise ModelError("outcome table references an outcome index out of range")

        self.prior = _readonly(prior)
        self.outcome_table = _readonly(table.astype(np.int64))
        # P[x] is used by the reward and every factor computation; cache it once.
        self.state_prior = _readonly(prior.sum(axis=1))
        self._prior_qx = _readonly(np.ascontiguousarray(prior.T))
        # masks[v, q, y, x] <=> mu(v, x, q) == y
        masks = (
            self.outcome_table.transpose(0, 2, 1)[:, :, None, :]
            == np.arange(ny)[None, None, :, None]
        )
        self.masks = _readonly(masks)

    # -- identifiers -----------------------------------------------------

    @property
    def shape(self) -> tuple[int, int, int, int]:
        """``(|X|, |Q|, |V|, |Y|)``."""
        return len(self.states), len(self.modes), len(self.actions), len(self.outcomes)

    def index(self, kind: str, ident) -> int:
        """Resolve an identifier (or an in-range integer index) to its position."""
        ids = getattr(self, kind + "s")
        if isinstance(ident, (int, np.integer)) and not isinstance(ident, bool):
            if 0 <= ident < len(ids):
                return int(ident)
            raise UnknownIdentifierError(kind, ident)
        try:
            return self._index[kind][str(ident)]
        except KeyError:
            raise UnknownIdentifierError(kind, ident) from None

    def state_index(self, x) -> int:
        return self.index("state", x)

    def mode_index(self, q) -> int:
        return self.index("mode", q)

    def action_index(self, v) -> int:
        return self.index("action", v)

    def outcome_index(self, y) -> int:
        return self.index("outcome", y)

    # -- table access ----------------------------------------------------

    def mu(self, v, x, q) -> int:
        """Outcome index of action ``v`` when the truth is ``(x, q)``."""
        return int(self.outcome_table[self.action_index(v), self.state_index(x), self.mode_index(q)])

    def compatible_mask(self, v: int, q: int, y: int) -> np.ndarray:
        """Boolean mask over X of ``D(y, v, q)`` (indices, no lookup)."""
        return self.masks[v, q, y]

    @property
    def min_positive_prior(self) -> float:
        return float(self.prior[self.prior > 0].min())

    def supported_pairs(self) -> list[tuple[int, int]]:
        """All ``(x, q)`` index pairs with positive prior, row-major."""
        xs, qs = np.nonzero(self.prior > 0)
        return list(zip(xs.tolist(), qs.tolist()))

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        nx, nq, nv, _ = self.shape
        prior = [
            [self.states[x], self.modes[q], float(self.prior[x, q])]
            for x in range(nx)
            for q in range(nq)
            if self.prior[x, q] > 0
        ]
        table = [
            [self.actions[v], self.states[x], self.modes[q], self.outcomes[self.outcome_table[v, x, q]]]
            for v in range(nv)
            for x in range(nx)
            for q in range(nq)
        ]
        return {
            "states": list(self.states),
            "modes": list(self.modes),
            "actions": list(self.actions),
            "outcomes": list(self.outcomes),
            "prior": prior,
            "outcome_table": table,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "DiagnosisModel":
        """Build a model from the JSON document layout.

        ``prior`` is a list of ``[x, q, p]`` triples (omitted pairs are zero),
        ``outcome_table`` a list of ``[v, x, q, y]`` quadruples covering every
        ``(v, x, q)`` exactly once.
        """
        for key in ("states", "modes", "actions", "outcomes", "prior", "outcome_table"):
            if key not in doc:
                raise ModelError(f"model document is missing key {key!r}")
        ids = {}
        for kind in ("states", "modes", "actions", "outcomes"):
            seq = doc[kind]
            if not isinstance(seq, list) or not seq:
                raise ModelError(f"{kind}: expected a nonempty list")
            seen = {}
            for i, ident in enumerate(seq):
                s = str(ident)
                if s in seen:
                    raise ModelError(f"{kind}[{i}]: duplicate identifier {s!r}")
                seen[s] = i
            ids[kind] = seen

        nx, nq, nv = len(ids["states"]), len(ids["modes"]), len(ids["actions"])

        def resolve(kind, ident, where):
            try:
                return ids[kind][str(ident)]
            except KeyError:
                raise ModelError(f"{where}: unknown {kind[:-1]} {ident!r}") from None

        prior = np.zeros((nx, nq))
        seen_pairs = set()
        for i, entry in enumerate(doc["prior"]):
            where = f"prior[{i}]"
            if not isinstance(entry, list) or len(entry) != 3:
                raise ModelError(f"{where}: expected [state, mode, probability]")
            x = resolve("states", entry[0], where)
            q = resolve("modes", entry[1], where)
            if (x, q) in seen_pairs:
                raise ModelError(f"{where}: duplicate entry for ({entry[0]!r}, {entry[1]!r})")
            seen_pairs.add((x, q))
            try:
                p = float(entry[2])
            except (TypeError, ValueError):
                raise ModelError(f"{where}: probability {entry[2]!r} is not a number") from None
            if not 0.0 <= p <= 1.0:
                raise ModelError(f"{where}: probability {p!r} outside [0, 1]")
            prior[x, q] = p
        total = prior.sum()
        if abs(total - 1.0) > PROB_ATOL:
            raise ModelError(f"prior: probabilities sum to {total!r}, expected 1")

        table = np.full((nv, nx, nq), -1, dtype=np.int64)
        for i, entry in enumerate(doc["outcome_table"]):
            where = f"outcome_table[{i}]"
            if not isinstance(entry, list) or len(entry) != 4:
                raise ModelError(f"{where}: expected [action, state, mode, outcome]")
            v = resolve("actions", entry[0], where)
            x = resolve("states", entry[1], where)
            q = resolve("modes", entry[2], where)
            y = resolve("outcomes", entry[3], where)
            if table[v, x, q] >= 0:
                raise ModelError(f"{where}: duplicate outcome for ({entry[0]!r}, {entry[1]!r}, {entry[2]!r})")
            table[v, x, q] = y
        missing = np.argwhere(table < 0)
        if len(missing):
            v, x, q = missing[0]
            raise ModelError(
                f"outcome_table: not total, no entry for "
                f"({doc['actions'][v]!r}, {doc['states'][x]!r}, {doc['modes'][q]!r})"
            )
        return cls(doc["states"], doc["modes"], doc["actions"], doc["outcomes"], prior, table)

    def __repr__(self):
        nx, nq, nv, ny = self.shape
        return f"DiagnosisModel(|X|={nx}, |Q|={nq}, |V|={nv}, |Y|={ny})"


def load_model(path) -> DiagnosisModel:
    """Read and validate a model JSON file."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ModelError(f"{path}: top level must be an object")
    try:
        return DiagnosisModel.from_dict(doc)
    except ModelError as exc:
        raise ModelError(f"{path}: {exc}") from None


def save_model(model: DiagnosisModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=1))


@dataclass(frozen=True)
class PartialRealization:
    """Executed ``(action, outcome)`` index pairs, in execution order."""

    steps: tuple[tuple[int, int], ...] = ()

    def __len__(self):
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)

    @property
    def actions(self) -> tuple[int, ...]:
        return tuple(v for v, _ in self.steps)

    def extend(self, v: int, y: int) -> "PartialRealization":
        return PartialRealization(self.steps + ((v, y),))

    def is_subrealization_of(self, other: "PartialRealization") -> bool:
        return set(self.steps) <= set(other.steps)

    def labels(self, model: DiagnosisModel) -> list[tuple[str, str]]:
        return [(model.actions[v], model.outcomes[y]) for v, y in self.steps]


@dataclass(frozen=True, eq=False)
class BeliefState:
    """Version spaces ``S[q]`` (rows of a ``(|Q|, |X|)`` bool array) plus the
    realization that produced them and its cached probability ``P[psi]``."""

    realization: PartialRealization
    version_spaces: np.ndarray
    realization_probability: float

    @property
    def t(self) -> int:
        return len(self.realization)

    @property
    def taken(self) -> frozenset[int]:
        return frozenset(self.realization.actions)

    def indistinguishable(self) -> np.ndarray:
        """Mask over X of ``union_q S[q]``: states not yet ruled out."""
        return self.version_spaces.any(axis=0)

    def fingerprint(self) -> bytes:
        return np.packbits(self.version_spaces).tobytes()

    def version_space(self, model: DiagnosisModel, q) -> frozenset[str]:
        row = self.version_spaces[model.mode_index(q)]
        return frozenset(model.states[i] for i in np.flatnonzero(row))


@dataclass(frozen=True, eq=False)
class PosteriorTable:
    """``P[x, q | psi]`` as an ``(|X|, |Q|)`` array."""

    model: DiagnosisModel = field(repr=False)
    values: np.ndarray

    def __getitem__(self, key):
        x, q = key
        return float(self.values[self.model.state_index(x), self.model.mode_index(q)])

    def state_marginal(self) -> np.ndarray:
        return self.values.sum(axis=1)


def _mass(model: DiagnosisModel, spaces: np.ndarray) -> float:
    # sum_q sum_{x in S[q]} P[x, q]
    return float(np.sum(model._prior_qx, where=spaces))


def initial_belief(model: DiagnosisModel) -> BeliefState:
    nx, nq = len(model.states), len(model.modes)
    spaces = _readonly(np.ones((nq, nx), dtype=bool))
    return BeliefState(PartialRealization(), spaces, _mass(model, spaces))


def compatible_states(model: DiagnosisModel, y, v, q) -> frozenset[str]:
    """States ``x`` with ``mu(v, x, q) == y``."""
    mask = model.masks[model.action_index(v), model.mode_index(q), model.outcome_index(y)]
    return frozenset(model.states[i] for i in np.flatnonzero(mask))


def update_belief(model: DiagnosisModel, belief: BeliefState, v, y) -> BeliefState:
    """Intersect every version space with ``D(y, v, q)``.

    Raises :class:`ContradictionError` if nothing with positive prior survives;
    the input belief is never modified.
    """
    vi, yi = model.action_index(v), model.outcome_index(y)
    spaces = belief.version_spaces & model.masks[vi, :, yi, :]
    prob = _mass(model, spaces)
    if prob <= 0.0:
        raise ContradictionError(model.actions[vi], model.outcomes[yi])
    return BeliefState(belief.realization.extend(vi, yi), _readonly(spaces), prob)


def belief_from_realization(model: DiagnosisModel, steps: Iterable[tuple]) -> BeliefState:
    belief = initial_belief(model)
    for v, y in steps:
        belief = update_belief(model, belief, v, y)
    return belief


def simulate_outcome(model: DiagnosisModel, v: int, x0: int, q0: int) -> int:
    return int(model.outcome_table[v, x0, q0])


def posterior(model: DiagnosisModel, belief: BeliefState) -> PosteriorTable:
    p_psi = belief.realization_probability
    if p_psi <= 0.0:
        raise ContradictionError(None, None)
    values = np.where(belief.version_spaces.T, model.prior, 0.0) / p_psi
    return PosteriorTable(model, _readonly(values))


def reward(model: DiagnosisModel, belief: BeliefState) -> float:
    """``1 - sum of P[x]`` over states not yet ruled out; 0 before any action.

    Evaluated as the prior mass of the ruled-out states, which equals the
    definition exactly and avoids ``1 - 0.999...`` cancellation.
    """
    return float(np.sum(model.state_prior, where=~belief.indistinguishable()))
