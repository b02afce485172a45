"""Invariant sweeps over generated instances.

Each suite returns a :class:`SuiteResult` listing the checks it ran and
serializable witnesses for every violation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from activediag.generate import random_models
from activediag.guarantees import (
    VIOLATION_ATOL,
    factor_sweep,
    delta_decomposition,
    factor_report,
    guarantee_bound,
    reachable_realizations,
    zeta_star_search,
)
from activediag.model import DiagnosisModel
from activediag.policies import (
    GreedyForm,
    GreedyPartition,
    exact_optimal_value,
    f_avg,
    greedy_argbest,
    marginal_benefits,
)


@dataclass
class SuiteResult:
    name: str
    checks: int = 0
    violations: list[dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.checks} checks, {len(self.violations)} violations"


def _labels(model, key):
    return [[model.actions[v], model.outcomes[y]] for v, y in sorted(key)]


def check_monotonicity(models: list[DiagnosisModel], depth: int = 3) -> SuiteResult:
    res = SuiteResult("adaptive-monotonicity")
    for i, m in enumerate(models):
        for key, b in reachable_realizations(m, depth).items():
            d = marginal_benefits(m, b)
            res.checks += len(d)
            for v in np.flatnonzero(d < -VIOLATION_ATOL):
                res.violations.append({"instance": i, "realization": _labels(m, key), "action": m.actions[v], "delta": float(d[v])})
    return res


def check_form_equivalence(models: list[DiagnosisModel], depth: int = 3) -> SuiteResult:
    res = SuiteResult("greedy-form-equivalence")
    for i, m in enumerate(models):
        for key, b in reachable_realizations(m, depth).items():
            if len(key) == len(m.actions):
                continue
            res.checks += 1
            direct = greedy_argbest(m, b, GreedyForm.DIRECT)
            part = greedy_argbest(m, b, GreedyForm.PARTITION)
            if set(direct) != set(part):
                res.violations.append({
                    "instance": i, "realization": _labels(m, key),
                    "direct": [m.actions[v] for v in direct], "partition": [m.actions[v] for v in part],
                })
    return res


def check_factor_chain(models: list[DiagnosisModel], k: int = 2) -> SuiteResult:
    res = SuiteResult("factor-chain")
    for i, m in enumerate(models):
        rep = factor_report(m, k)
        for name, lo, hi, ok in rep.chain():
            res.checks += 1
            if not ok:
                res.violations.append({"instance": i, "link": name, "lhs": lo, "rhs": hi, "report": rep.to_dict()})
    return res


def check_uniform_zeta_bar(models: list[DiagnosisModel], k: int = 2) -> SuiteResult:
    """On priors uniform over modes within each state, the per-mode factor equals |Q|."""
    res = SuiteResult("uniform-zeta-bar")
    for i, m in enumerate(models):
        res.checks += 1
        zb = factor_sweep(m, k).zeta_bar
        if abs(zb - len(m.modes)) > VIOLATION_ATOL:
            res.violations.append({"instance": i, "zeta_bar": zb, "modes": len(m.modes)})
    return res


def check_decomposition(models: list[DiagnosisModel], depth: int = 3) -> SuiteResult:
    """Outcome-indexed recombination against the direct marginal benefit."""
    res = SuiteResult("delta-decomposition")
    for i, m in enumerate(models):
        for key, b in reachable_realizations(m, depth).items():
            direct = marginal_benefits(m, b)
            for v in range(len(m.actions)):
                res.checks += 1
                dec = delta_decomposition(m, b, v)
                if abs(dec.recombined() - direct[v]) > VIOLATION_ATOL or min(dec.zeta_y.values()) < 1 - VIOLATION_ATOL:
                    res.violations.append({
                        "instance": i, "realization": _labels(m, key), "action": m.actions[v],
                        "recombined": dec.recombined(), "direct": float(direct[v]),
                        "min_zeta_y": min(dec.zeta_y.values()),
                    })
    return res


def check_greedy_bound(models: list[DiagnosisModel], max_k: int = 3, cap: int = 10**7) -> SuiteResult:
    """``f_avg(greedy, l) > (1 - exp(-l / (zeta k))) * OPT_k`` with the swept
    factor for every ``l <= k`` and with the empirical best factor at ``l = k``.

    When ``OPT_k`` is zero both sides vanish and the check is vacuous.
    """
    res = SuiteResult("greedy-bound")
    greedy = GreedyPartition()
    for i, m in enumerate(models):
        values = {ell: f_avg(m, greedy, ell) for ell in range(1, max_k + 1)}
        for k in range(1, max_k + 1):
            opt = exact_optimal_value(m, k, cap)
            zeta_alg = factor_sweep(m, k, cap=cap).zeta
            zeta_star = zeta_star_search(m, k, cap).value
            checks = [("zeta_alg", zeta_alg, ell) for ell in range(1, k + 1)] + [("zeta_star", zeta_star, k)]
            for which, zeta, ell in checks:
                res.checks += 1
                bound = guarantee_bound(zeta, k, ell) * opt
                if opt > 0 and not values[ell] > bound:
                    res.violations.append({
                        "instance": i, "factor": which, "zeta": zeta, "k": k, "ell": ell,
                        "greedy": float(values[ell]), "optimal": float(opt), "bound": bound,
                    })
    return res


def check_healthy_case(models: list[DiagnosisModel], max_k: int = 3) -> SuiteResult:
    """Single-mode instances: empirical factor at most 1, greedy beats (1 - 1/e) of optimal."""
    res = SuiteResult("healthy-special-case")
    for i, m in enumerate(models):
        for k in range(1, max_k + 1):
            res.checks += 2
            star = zeta_star_search(m, k).value
            if star > 1 + VIOLATION_ATOL:
                res.violations.append({"instance": i, "k": k, "zeta_star": star})
            opt = exact_optimal_value(m, k)
            g = f_avg(m, GreedyPartition(), k)
            if opt > 0 and not g > (1 - np.exp(-1)) * opt:
                res.violations.append({"instance": i, "k": k, "greedy": g, "optimal": opt})
    return res


def run_verify(seed: int = 7, instances: int = 50, depth: int = 3, k: int = 2, max_k: int = 3) -> list[SuiteResult]:
    models = random_models(seed, instances)
    uniform = random_models(seed + 1, instances, uniform_modes=True)
    healthy = random_models(seed + 2, instances, n_modes=1)
    return [
        check_monotonicity(models, depth),
        check_form_equivalence(models, depth),
        check_decomposition(models, depth),
        check_factor_chain(models, k),
        check_uniform_zeta_bar(uniform, k),
        check_greedy_bound(models, max_k),
        check_healthy_case(healthy, max_k),
    ]
