"""Weak adaptive submodularity factors and the greedy performance bound.

Three factors are computed by exhaustive sweeps over small instances:

``zeta_alg``
    The sweep over action sequences of length ``k``: at every reached belief
    and every candidate ``(v, y)``, the ratio of the prior mass of the
    surviving states to the joint mass of the surviving ``(x, q)`` pairs.
``zeta_bar``
    Same sweep, numerator summed per mode instead of over the union.
``zeta_star``
    The smallest constant that actually satisfies
    ``Delta(v | psi') <= zeta * Delta(v | psi)`` for every reachable
    ``psi`` contained in ``psi'`` up to a depth.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from activediag.errors import ContradictionError, SizeCapError
from activediag.model import BeliefState, DiagnosisModel, initial_belief
from activediag.policies import marginal_benefits

DEFAULT_CAP = 10**7
DELTA_FLOOR = 1e-12
VIOLATION_ATOL = 1e-9


def b_function(taus) -> float:
    """``sum(tau) - sum(tau**2) / sum(tau)``; nondecreasing in every coordinate on the nonnegative orthant."""
    t = np.asarray(taus, dtype=float)
    if np.any(t < 0):
        raise ValueError("b is only defined for nonnegative arguments")
    s = t.sum()
    if s <= 0:
        raise ValueError("b is undefined at the zero vector")
    return float(s - (t @ t) / s)


def guarantee_bound(zeta: float, k: int, ell: int) -> float:
    """Fraction of the optimal depth-``k`` value that ``ell`` greedy steps are guaranteed."""
    if not zeta >= 1:
        raise ValueError(f"zeta must be >= 1, got {zeta}")
    if k < 1 or ell < 1:
        raise ValueError("k and ell must be positive")
    if math.isinf(zeta):
        return 0.0
    return 1.0 - math.exp(-ell / (zeta * k))


def factor_terms(model: DiagnosisModel, spaces: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """For every ``(v, y)`` at version spaces ``spaces``, return arrays ``(|V|, |Y|)``:

    joint mass ``sum_q sum_{x in S_q & D} P[x, q]``, union mass
    ``sum_{x in union_q S_q & D} P[x]`` and per-mode marginal mass
    ``sum_q sum_{x in S_q & D} P[x]``.
    """
    nx, nq, nv, ny = model.shape
    union = np.zeros((nv, ny, nx), dtype=bool)
    joint = np.zeros((nv, ny))
    summed = np.zeros((nv, ny))
    for q in range(nq):
        if not spaces[q].any():
            continue
        inter = model.masks[:, q] & spaces[q]
        union |= inter
        joint += inter @ model._prior_qx[q]
        summed += inter @ model.state_prior
    return joint, union @ model.state_prior, summed


@dataclass(frozen=True)
class Witness:
    ratio: float
    realization: tuple[tuple[str, str], ...]
    action: str
    outcome: str | None = None
    base_realization: tuple[tuple[str, str], ...] | None = None

    def to_dict(self) -> dict:
        d = {"ratio": self.ratio, "realization": [list(s) for s in self.realization], "action": self.action}
        if self.outcome is not None:
            d["outcome"] = self.outcome
        if self.base_realization is not None:
            d["base_realization"] = [list(s) for s in self.base_realization]
        return d


@dataclass
class SweepResult:
    zeta: float
    zeta_bar: float
    witness: Witness | None
    witness_bar: Witness | None
    beliefs_visited: int


def _child(model: DiagnosisModel, belief: BeliefState, v: int, y: int) -> BeliefState | None:
    spaces = belief.version_spaces & model.masks[v, :, y, :]
    mass = float(np.sum(model._prior_qx, where=spaces))
    if mass <= 0.0:
        return None
    return BeliefState(belief.realization.extend(v, y), spaces, mass)


def factor_sweep(
    model: DiagnosisModel,
    k: int,
    *,
    true_pairs=None,
    include_prior: bool = False,
    cap: int = DEFAULT_CAP,
) -> SweepResult:
    """Run the factor sweep over all action sequences of length ``k``.

    For each true pair, each sequence ``v_1..v_k`` is executed with outcomes
    simulated from that pair; after each step ``t = 1..k`` the ratios are
    maximized over every candidate ``(v, y)``.  ``true_pairs`` defaults to
    every supported pair.  Beliefs already expanded at the same depth are
    not expanded again, which leaves the maximum unchanged.  Zero-mass
    candidate outcomes are skipped.  With ``include_prior`` the starting
    belief (``t = 0``) is scored as well.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    pairs = model.supported_pairs() if true_pairs is None else [
        (model.state_index(x), model.mode_index(q)) for x, q in true_pairs
    ]
    nv = len(model.actions)
    work = nv**k * len(pairs)
    if work > cap:
        raise SizeCapError(f"{nv}^{k} sequences x {len(pairs)} true pairs = {work} exceeds cap {cap}")

    scored: set[bytes] = set()
    best = {"zeta": (0.0, None), "zeta_bar": (0.0, None)}

    def score(belief: BeliefState):
        key = belief.fingerprint()
        if key in scored:
            return
        scored.add(key)
        joint, union_mass, summed = factor_terms(model, belief.version_spaces)
        ok = joint > 0
        safe = np.where(ok, joint, 1.0)
        for name, num in (("zeta", union_mass), ("zeta_bar", summed)):
            r = np.where(ok, num / safe, -np.inf)
            v, y = np.unravel_index(int(np.argmax(r)), r.shape)
            if r[v, y] > best[name][0]:
                best[name] = (float(r[v, y]), Witness(
                    float(r[v, y]), tuple(belief.realization.labels(model)), model.actions[v], model.outcomes[y]
                ))

    root = initial_belief(model)
    if include_prior:
        score(root)
    for x0, q0 in pairs:
        expanded: set[tuple[bytes, int]] = set()

        def walk(belief: BeliefState, depth: int):
            if depth == k:
                return
            key = (belief.fingerprint(), depth)
            if key in expanded:
                return
            expanded.add(key)
            for v in range(nv):
                child = _child(model, belief, v, int(model.outcome_table[v, x0, q0]))
                score(child)
                walk(child, depth + 1)

        walk(root, 0)
    (zeta, w), (zeta_bar, w_bar) = best["zeta"], best["zeta_bar"]
    return SweepResult(zeta, zeta_bar, w, w_bar, len(scored))


def compute_zeta_sweep(model: DiagnosisModel, k: int, cap: int = DEFAULT_CAP, **kw) -> float:
    return factor_sweep(model, k, cap=cap, **kw).zeta


def compute_zeta_bar(model: DiagnosisModel, k: int, cap: int = DEFAULT_CAP, **kw) -> float:
    return factor_sweep(model, k, cap=cap, **kw).zeta_bar


@dataclass
class ZetaStarSearch:
    value: float
    witness: Witness | None
    # (psi, psi', v, Delta(v|psi')) where Delta(v|psi) vanished but Delta(v|psi') did not
    zero_base_violations: list[Witness] = field(default_factory=list)
    realizations: int = 0


def reachable_realizations(model: DiagnosisModel, depth: int, cap: int = DEFAULT_CAP) -> dict[frozenset, BeliefState]:
    """Every positive-probability realization with at most ``depth`` distinct actions,
    keyed by its set of ``(action, outcome)`` index pairs."""
    out: dict[frozenset, BeliefState] = {frozenset(): initial_belief(model)}
    frontier = dict(out)
    nv, ny = len(model.actions), len(model.outcomes)
    for _ in range(depth):
        nxt: dict[frozenset, BeliefState] = {}
        for key, belief in frontier.items():
            taken = {v for v, _ in key}
            for v in range(nv):
                if v in taken:
                    continue
                for y in range(ny):
                    new_key = key | {(v, y)}
                    if new_key in nxt:
                        continue
                    child = _child(model, belief, v, y)
                    if child is not None:
                        nxt[new_key] = child
        out.update(nxt)
        if len(out) > cap:
            raise SizeCapError(f"more than {cap} realizations up to depth {depth}")
        frontier = nxt
    return out


def zeta_star_search(model: DiagnosisModel, depth: int, cap: int = DEFAULT_CAP) -> ZetaStarSearch:
    """Largest ``Delta(v|psi') / Delta(v|psi)`` over reachable ``psi <= psi'`` (``|psi'| <= depth``)
    and ``v`` not taken in ``psi'``.  Ratios with ``Delta(v|psi) <= 1e-12`` are
    excluded; those with a positive numerator are listed as violations."""
    real = reachable_realizations(model, depth, cap)
    work = sum(2 ** len(k) for k in real) * len(model.actions)
    if work > cap:
        raise SizeCapError(f"{work} ratio evaluations exceed cap {cap}")
    deltas = {key: marginal_benefits(model, b) for key, b in real.items()}

    def labels(key):
        return tuple((model.actions[v], model.outcomes[y]) for v, y in sorted(key))

    result = ZetaStarSearch(1.0, None, realizations=len(real))
    for key_hi, d_hi in deltas.items():
        taken = {v for v, _ in key_hi}
        free = [v for v in range(len(model.actions)) if v not in taken]
        if not free:
            continue
        items = sorted(key_hi)
        for r in range(len(items) + 1):
            for sub in itertools.combinations(items, r):
                d_lo = deltas[frozenset(sub)]
                for v in free:
                    hi, lo = d_hi[v], d_lo[v]
                    if lo <= DELTA_FLOOR:
                        if hi > VIOLATION_ATOL:
                            result.zero_base_violations.append(
                                Witness(float("inf"), labels(key_hi), model.actions[v], base_realization=labels(sub))
                            )
                        continue
                    ratio = hi / lo
                    if ratio > result.value:
                        result.value = float(ratio)
                        result.witness = Witness(float(ratio), labels(key_hi), model.actions[v], base_realization=labels(sub))
    return result


def empirical_zeta_star(model: DiagnosisModel, depth: int, cap: int = DEFAULT_CAP) -> float:
    return zeta_star_search(model, depth, cap).value


@dataclass(frozen=True)
class DeltaDecomposition:
    """Per-outcome masses of one action at one belief.

    ``tau[y]`` is the joint mass of the pairs that would report ``y``;
    ``zeta_y[y]`` is the union prior mass of the states that would survive
    ``y``, divided by ``tau[y]`` (only for ``tau[y] > 0``).
    """

    tau: dict[str, float]
    zeta_y: dict[str, float]
    union_mass: dict[str, float]

    def recombined(self) -> float:
        """``sum zeta_y tau_y - sum zeta_y tau_y^2 / sum tau_y``."""
        total = sum(self.tau.values())
        first = sum(self.zeta_y[y] * t for y, t in self.tau.items() if t > 0)
        second = sum(self.zeta_y[y] * t * t for y, t in self.tau.items() if t > 0)
        return first - second / total

    def pairwise_form(self) -> float:
        """``sum_i zeta_i tau_i sum_{j != i} tau_j / sum tau``; equals :meth:`recombined`."""
        total = sum(self.tau.values())
        return sum(self.zeta_y[y] * t * (total - t) for y, t in self.tau.items() if t > 0) / total

    def b(self) -> float:
        return b_function(list(self.tau.values()))

    def outcome_overlap(self, current_mass: float) -> float:
        """``sum_y union_mass[y] - current_mass``: zero exactly when the per-outcome
        surviving sets are disjoint, in which case :meth:`recombined` equals
        the marginal benefit."""
        return sum(self.union_mass[y] for y, t in self.tau.items() if t > 0) - current_mass


def delta_decomposition(model: DiagnosisModel, belief: BeliefState, v) -> DeltaDecomposition:
    if belief.realization_probability <= 0:
        raise ContradictionError(None, None)
    vi = model.action_index(v)
    joint, union_mass, _ = factor_terms(model, belief.version_spaces)
    tau = {model.outcomes[y]: float(joint[vi, y]) for y in range(len(model.outcomes))}
    zeta_y = {
        model.outcomes[y]: float(union_mass[vi, y] / joint[vi, y])
        for y in range(len(model.outcomes))
        if joint[vi, y] > 0
    }
    um = {model.outcomes[y]: float(union_mass[vi, y]) for y in range(len(model.outcomes))}
    return DeltaDecomposition(tau, zeta_y, um)


@dataclass
class FactorReport:
    k: int
    depth: int
    zeta_alg: float
    zeta_alg_single_pair: float
    single_pair: tuple[str, str]
    zeta_bar: float
    zeta_star_empirical: float
    upper_bound: float
    witnesses: dict[str, Witness | None]
    zero_base_violations: list[Witness]

    def chain(self) -> list[tuple[str, float, float, bool]]:
        """Each link ``(name, lhs, rhs, holds)`` of
        ``1 <= zeta_star <= zeta_alg <= zeta_bar <= upper_bound``."""
        links = [
            ("1 <= zeta_star", 1.0, self.zeta_star_empirical),
            ("zeta_star <= zeta_alg", self.zeta_star_empirical, self.zeta_alg),
            ("zeta_alg <= zeta_bar", self.zeta_alg, self.zeta_bar),
            ("zeta_bar <= upper_bound", self.zeta_bar, self.upper_bound),
        ]
        return [(name, lo, hi, lo <= hi + VIOLATION_ATOL) for name, lo, hi in links]

    def chain_holds(self) -> bool:
        return all(ok for *_, ok in self.chain())

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "depth": self.depth,
            "zeta_alg": self.zeta_alg,
            "zeta_alg_single_pair": self.zeta_alg_single_pair,
            "single_pair": list(self.single_pair),
            "zeta_bar": self.zeta_bar,
            "zeta_star_empirical": self.zeta_star_empirical,
            "upper_bound": self.upper_bound,
            "chain": [{"link": n, "lhs": lo, "rhs": hi, "holds": ok} for n, lo, hi, ok in self.chain()],
            "witnesses": {n: (w.to_dict() if w else None) for n, w in self.witnesses.items()},
            "zero_base_violations": [w.to_dict() for w in self.zero_base_violations],
        }


def factor_report(model: DiagnosisModel, k: int, depth: int | None = None, cap: int = DEFAULT_CAP, single_pair=None) -> FactorReport:
    """All factors for one model; ``depth`` for the empirical search defaults to ``k``."""
    depth = k if depth is None else depth
    sweep = factor_sweep(model, k, cap=cap)
    if single_pair is None:
        single_pair = model.supported_pairs()[0]
    xs, qs = model.state_index(single_pair[0]), model.mode_index(single_pair[1])
    single = factor_sweep(model, k, true_pairs=[(xs, qs)], cap=cap)
    star = zeta_star_search(model, depth, cap)
    return FactorReport(
        k=k,
        depth=depth,
        zeta_alg=sweep.zeta,
        zeta_alg_single_pair=single.zeta,
        single_pair=(model.states[xs], model.modes[qs]),
        zeta_bar=sweep.zeta_bar,
        zeta_star_empirical=star.value,
        upper_bound=len(model.modes) / model.min_positive_prior,
        witnesses={"zeta_alg": sweep.witness, "zeta_bar": sweep.witness_bar, "zeta_star": star.witness},
        zero_base_violations=star.zero_base_violations,
    )
