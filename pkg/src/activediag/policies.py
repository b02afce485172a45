"""Action selection: marginal benefit, greedy policies, baselines and the run loop.

Conventions
-----------
Policies only ever pick actions that have not been taken yet; repeating a
deterministic measurement cannot change a version space.  Ties are broken
by the smallest action index.
"""

from __future__ import annotations

import statistics
import sys
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, TextIO

import numpy as np

from activediag.errors import ContradictionError, ExhaustedError, ModelError, SizeCapError
from activediag.model import (
    BeliefState,
    DiagnosisModel,
    initial_belief,
    posterior,
    reward,
    update_belief,
)

TIE_ATOL = 1e-12
DEFAULT_SEARCH_CAP = 10**7


class GreedyForm(Enum):
    DIRECT = "direct"
    PARTITION = "partition"


def partition_terms(model: DiagnosisModel, belief: BeliefState, actions=None) -> tuple[np.ndarray, np.ndarray]:
    """Per-outcome masses for each candidate action.

    Returns ``(tau, union_mass)``, both shaped ``(len(actions), |Y|)``:

    * ``tau[v, y] = sum_q sum_{x in S_q & D(y,v,q)} P[x, q]``
    * ``union_mass[v, y] = sum_{x in union_q (S_q & D(y,v,q))} P[x]``

    The loop runs over modes, so the cost is linear in ``|Q|``.
    """
    if actions is None:
        actions = np.arange(len(model.actions))
    actions = np.asarray(actions, dtype=np.int64)
    nx, nq, _, ny = model.shape
    spaces = belief.version_spaces
    union = np.zeros((len(actions), ny, nx), dtype=bool)
    tau = np.zeros((len(actions), ny))
    for q in range(nq):
        row = spaces[q]
        if not row.any():
            continue
        inter = model.masks[actions, q] & row
        union |= inter
        tau += inter @ model._prior_qx[q]
    return tau, union @ model.state_prior


def _check_belief(model, belief):
    if belief.realization_probability <= 0.0:
        raise ContradictionError(None, None)


def marginal_benefit(model: DiagnosisModel, belief: BeliefState, v) -> float:
    """Expected one-step reward gain of action ``v`` under the posterior."""
    _check_belief(model, belief)
    vi = model.action_index(v)
    tau, union_mass = partition_terms(model, belief, [vi])
    current = float(np.sum(model.state_prior, where=belief.indistinguishable()))
    return current - float(tau[0] @ union_mass[0]) / belief.realization_probability


def marginal_benefits(model: DiagnosisModel, belief: BeliefState, actions=None) -> np.ndarray:
    """Vectorized :func:`marginal_benefit` over ``actions`` (default: all)."""
    _check_belief(model, belief)
    tau, union_mass = partition_terms(model, belief, actions)
    current = float(np.sum(model.state_prior, where=belief.indistinguishable()))
    return current - np.einsum("vy,vy->v", tau, union_mass) / belief.realization_probability


def untaken_actions(model: DiagnosisModel, belief: BeliefState) -> list[int]:
    taken = belief.taken
    return [v for v in range(len(model.actions)) if v not in taken]


def direct_scores(model: DiagnosisModel, belief: BeliefState, actions: Iterable[int]) -> np.ndarray:
    """Marginal benefit by summing over every supported (x, q) object.

    For each object the action's outcome is simulated and the prior mass of
    the states that would remain is accumulated, weighted by ``P[x, q]``.
    Union masses are memoized per ``(v, y)`` inside one call.
    """
    _check_belief(model, belief)
    spaces = belief.version_spaces
    objects = [(x, q) for q, x in zip(*np.nonzero(spaces)) if model.prior[x, q] > 0]
    current = float(np.sum(model.state_prior, where=belief.indistinguishable()))
    out = []
    for v in actions:
        memo: dict[int, float] = {}
        acc = 0.0
        for x, q in objects:
            y = int(model.outcome_table[v, x, q])
            if y not in memo:
                remaining = (spaces & model.masks[v, :, y, :]).any(axis=0)
                memo[y] = float(np.sum(model.state_prior, where=remaining))
            acc += model.prior[x, q] * memo[y]
        out.append(current - acc / belief.realization_probability)
    return np.array(out)


def partition_scores(model: DiagnosisModel, belief: BeliefState, actions: Iterable[int]) -> np.ndarray:
    """``sum_y union_mass[v, y] * tau[v, y]``; smaller is better."""
    tau, union_mass = partition_terms(model, belief, list(actions))
    return np.einsum("vy,vy->v", tau, union_mass)


def best_set(scores: np.ndarray, candidates: list[int], maximize: bool, atol: float = TIE_ATOL) -> list[int]:
    """Candidates whose score is within ``atol`` of the best."""
    best = scores.max() if maximize else scores.min()
    close = scores >= best - atol if maximize else scores <= best + atol
    return [c for c, ok in zip(candidates, close) if ok]


def greedy_argbest(model: DiagnosisModel, belief: BeliefState, form: GreedyForm) -> list[int]:
    """Pre-tie-break set of greedy choices among untaken actions."""
    candidates = untaken_actions(model, belief)
    if not candidates:
        raise ExhaustedError("every action has already been taken")
    if GreedyForm(form) is GreedyForm.DIRECT:
        return best_set(direct_scores(model, belief, candidates), candidates, maximize=True)
    return best_set(partition_scores(model, belief, candidates), candidates, maximize=False)


def greedy_next_action(model: DiagnosisModel, belief: BeliefState, form: GreedyForm = GreedyForm.PARTITION) -> int:
    return min(greedy_argbest(model, belief, form))


# -- policies -----------------------------------------------------------------


class Policy:
    """Maps ``(model, belief)`` to an untaken action index."""

    name = "policy"
    ignores_budget = False

    def select(self, model: DiagnosisModel, belief: BeliefState) -> int:
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}()"


class GreedyDirect(Policy):
    name = "greedy-direct"

    def select(self, model, belief):
        return greedy_next_action(model, belief, GreedyForm.DIRECT)


class GreedyPartition(Policy):
    name = "greedy-partition"

    def select(self, model, belief):
        return greedy_next_action(model, belief, GreedyForm.PARTITION)


class BruteForceAll(Policy):
    """Takes every action in declaration order, ignoring the budget."""

    name = "brute-force"
    ignores_budget = True

    def select(self, model, belief):
        candidates = untaken_actions(model, belief)
        if not candidates:
            raise ExhaustedError("every action has already been taken")
        return candidates[0]


class RandomPolicy(Policy):
    """Uniform choice among untaken actions, seeded by (seed, realization)."""

    name = "random"

    def __init__(self, seed: int = 0):
        self.seed = seed

    def select(self, model, belief):
        candidates = untaken_actions(model, belief)
        if not candidates:
            raise ExhaustedError("every action has already been taken")
        key = [self.seed, *(i for step in belief.realization for i in step)]
        return candidates[int(np.random.default_rng(key).integers(len(candidates)))]

    def __repr__(self):
        return f"RandomPolicy(seed={self.seed})"


class ExactOptimal(Policy):
    """Follows an optimal depth-``budget`` adaptive plan (exhaustive search)."""

    name = "exact-optimal"

    def __init__(self, budget: int, cap: int = DEFAULT_SEARCH_CAP):
        self.budget = budget
        self.cap = cap
        self._searches: dict[int, _OptimalSearch] = {}

    def select(self, model, belief):
        search = self._searches.get(id(model))
        if search is None or search.model is not model:
            search = self._searches[id(model)] = _OptimalSearch(model, self.budget, self.cap)
        candidates = untaken_actions(model, belief)
        if not candidates:
            raise ExhaustedError("every action has already been taken")
        remaining = max(self.budget - belief.t, 1)
        values = np.array([search.action_value(belief, v, remaining) for v in candidates])
        return min(best_set(values, candidates, maximize=True))

    def __repr__(self):
        return f"ExactOptimal(budget={self.budget})"


POLICIES = {
    "greedy-direct": GreedyDirect,
    "greedy-partition": GreedyPartition,
    "brute-force": BruteForceAll,
    "random": RandomPolicy,
}


def make_policy(name: str, budget: int | None = None, seed: int = 0) -> Policy:
    if name == "random":
        return RandomPolicy(seed)
    if name == "exact-optimal":
        if budget is None:
            raise ValueError("exact-optimal needs a budget")
        return ExactOptimal(budget)
    try:
        return POLICIES[name]()
    except KeyError:
        raise ValueError(f"unknown policy {name!r}; choose from {sorted([*POLICIES, 'exact-optimal'])}") from None


# -- exact adaptive optimum ---------------------------------------------------


class _OptimalSearch:
    """Memoized expectimax over beliefs, keyed by version-space fingerprint."""

    def __init__(self, model: DiagnosisModel, budget: int, cap: int):
        nv, ny = len(model.actions), len(model.outcomes)
        bound = (nv * ny) ** budget
        if bound > cap:
            raise SizeCapError(f"search tree bound |V|^k*|Y|^k = {bound} exceeds cap {cap}")
        self.model = model
        self._memo: dict[tuple[bytes, int], float] = {}

    def value(self, belief: BeliefState, remaining: int) -> float:
        if remaining <= 0:
            return reward(self.model, belief)
        key = (belief.fingerprint(), remaining)
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        # Repeating an action is allowed here; it is never better than a fresh
        # one because the reward is monotone, so the optimum is unchanged.
        best = max(self.action_value(belief, v, remaining) for v in range(len(self.model.actions)))
        self._memo[key] = best
        return best

    def action_value(self, belief: BeliefState, v: int, remaining: int) -> float:
        model = self.model
        spaces = belief.version_spaces
        total = 0.0
        for y in range(len(model.outcomes)):
            nxt = spaces & model.masks[v, :, y, :]
            mass = float(np.sum(model._prior_qx, where=nxt))
            if mass <= 0.0:
                continue
            child = BeliefState(belief.realization.extend(v, y), nxt, mass)
            total += mass * self.value(child, remaining - 1)
        return total / belief.realization_probability


def exact_optimal_value(model: DiagnosisModel, budget: int, cap: int = DEFAULT_SEARCH_CAP) -> float:
    """Best prior-expected final reward of any deterministic adaptive policy
    taking at most ``budget`` actions."""
    if budget < 0:
        raise ValueError("budget must be nonnegative")
    if budget == 0:
        return 0.0
    return _OptimalSearch(model, budget, cap).value(initial_belief(model), budget)


# -- run loop -----------------------------------------------------------------


@dataclass(frozen=True)
class Step:
    action: str
    outcome: str
    reward_after: float
    wall_time: float


@dataclass
class RunRecord:
    policy: str
    budget: int
    true_state: str | None
    true_mode: str | None
    trace: list[Step] = field(default_factory=list)
    final_indistinguishable: frozenset[str] = frozenset()
    final_reward: float = 0.0
    budget_exceeded: bool = False

    @property
    def actions(self) -> list[str]:
        return [s.action for s in self.trace]

    @property
    def mean_latency(self) -> float:
        return statistics.fmean(s.wall_time for s in self.trace) if self.trace else 0.0


def _timed_select(policy: Policy, model, belief, repeats: int) -> tuple[int, float]:
    times = []
    choice = None
    for _ in range(max(repeats, 1)):
        start = time.perf_counter()
        choice = policy.select(model, belief)
        times.append(time.perf_counter() - start)
    return choice, statistics.median(times)


def run_policy(
    model: DiagnosisModel,
    policy: Policy,
    true_pair: tuple,
    budget: int,
    *,
    timing_repeats: int = 1,
) -> RunRecord:
    """Simulate ``policy`` against a fixed true ``(state, mode)`` pair.

    Outcomes come from the outcome table.  Only the selection step is timed.
    :class:`BruteForceAll` ignores ``budget`` and takes every action.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    x0, q0 = model.state_index(true_pair[0]), model.mode_index(true_pair[1])
    if model.prior[x0, q0] <= 0:
        raise ModelError(f"true pair {true_pair!r} has zero prior probability")
    steps = len(model.actions) if policy.ignores_budget else min(budget, len(model.actions))
    belief = initial_belief(model)
    record = RunRecord(policy.name, budget, model.states[x0], model.modes[q0])
    for _ in range(steps):
        v, elapsed = _timed_select(policy, model, belief, timing_repeats)
        y = int(model.outcome_table[v, x0, q0])
        belief = update_belief(model, belief, v, y)
        record.trace.append(Step(model.actions[v], model.outcomes[y], reward(model, belief), elapsed))
    _finish(model, belief, record)
    record.budget_exceeded = len(record.trace) > budget
    return record


def _finish(model, belief, record):
    mask = belief.indistinguishable()
    record.final_indistinguishable = frozenset(model.states[i] for i in np.flatnonzero(mask))
    record.final_reward = reward(model, belief)


def f_avg(model: DiagnosisModel, policy: Policy, budget: int) -> float:
    """Prior-weighted final reward, enumerating every supported true pair."""
    total = 0.0
    for x, q in model.supported_pairs():
        total += model.prior[x, q] * run_policy(model, policy, (x, q), budget).final_reward
    return total


def policy_value(model: DiagnosisModel, policy: Policy, budget: int) -> float:
    """Same quantity as :func:`f_avg`, computed over the outcome tree instead of per pair."""

    def walk(belief, left):
        if left == 0 or len(belief.taken) == len(model.actions):
            return belief.realization_probability * reward(model, belief)
        v = policy.select(model, belief)
        total = 0.0
        for y in range(len(model.outcomes)):
            nxt = belief.version_spaces & model.masks[v, :, y, :]
            mass = float(np.sum(model._prior_qx, where=nxt))
            if mass > 0:
                total += walk(BeliefState(belief.realization.extend(v, y), nxt, mass), left - 1)
        return total

    steps = len(model.actions) if policy.ignores_budget else budget
    return walk(initial_belief(model), steps)


# -- interactive --------------------------------------------------------------


def _summary(model: DiagnosisModel, belief: BeliefState, top: int = 5) -> str:
    marg = posterior(model, belief).state_marginal()
    order = np.argsort(-marg, kind="stable")[:top]
    remaining = int(belief.indistinguishable().sum())
    best = ", ".join(f"{model.states[i]}={marg[i]:.4f}" for i in order if marg[i] > 0)
    return f"reward {reward(model, belief):.6f}; {remaining} indistinguishable state(s); top posterior: {best}"


def interactive_session(
    model: DiagnosisModel,
    budget: int,
    *,
    policy: Policy | None = None,
    stdin: TextIO | None = None,
    stdout: TextIO | None = None,
) -> RunRecord:
    """Recommend actions and read real outcomes from an operator.

    Protocol: the prompt ``action t/k: <action-id>`` is written, the operator
    answers with an outcome id (e.g. ``101``) or ``quit``.  Unknown outcomes
    re-prompt; an outcome contradicting the model is reported and discarded.
    End of input finishes the session.
    """
    policy = policy or GreedyPartition()
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    if budget < 1:
        raise ValueError("budget must be at least 1")
    belief = initial_belief(model)
    record = RunRecord(policy.name, budget, None, None)
    steps = min(budget, len(model.actions))
    while belief.t < steps:
        v, elapsed = _timed_select(policy, model, belief, 1)
        stdout.write(f"action {belief.t + 1}/{budget}: {model.actions[v]}\n")
        stdout.flush()
        line = stdin.readline()
        if not line:
            break
        answer = line.strip()
        if answer == "quit":
            break
        try:
            y = model.outcome_index(answer)
        except KeyError:
            stdout.write(f"unrecognized outcome {answer!r}; expected one of {', '.join(model.outcomes)}\n")
            continue
        try:
            belief = update_belief(model, belief, v, y)
        except ContradictionError as exc:
            stdout.write(f"warning: {exc}; step ignored\n")
            continue
        record.trace.append(Step(model.actions[v], model.outcomes[y], reward(model, belief), elapsed))
        stdout.write(_summary(model, belief) + "\n")
    _finish(model, belief, record)
    return record
