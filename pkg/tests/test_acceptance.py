"""One test per acceptance criterion, each printing a PASS/FAIL line.

Instances come from the same generator and seed as ``activediag verify``.
"""

import itertools
import time

import numpy as np
import pytest

from activediag.circuit import small_circuit_path
from activediag.faults import HEALTHY, Flip, SensorMode, StuckAt, preimage
from activediag.generate import random_models
from activediag.guarantees import b_function, delta_decomposition, reachable_realizations
from activediag.harness import ExperimentConfig, build_model, run_experiment, timing_scan
from activediag.model import belief_from_realization, posterior, reward, update_belief
from activediag.policies import marginal_benefit
from activediag.verify import (
    check_decomposition,
    check_factor_chain,
    check_form_equivalence,
    check_greedy_bound,
    check_healthy_case,
    check_monotonicity,
    check_uniform_zeta_bar,
)

from conftest import ACCEPTANCE_LINES

SEED = 7
INSTANCES = 50
CIRCUIT = str(small_circuit_path())


@pytest.fixture(scope="module")
def models():
    return random_models(SEED, INSTANCES)


def verdict(n: int, ok: bool, detail: str):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def oracle_mismatches(model, depth=2):
    """Compare version spaces, posteriors and benefits with definitional oracles
    on every realization of distinct actions generated by a supported pair."""
    nx, nq, nv, _ = model.shape
    seen = set()
    checks = bad = 0
    for x0, q0 in model.supported_pairs():
        for r in range(depth + 1):
            for seq in itertools.permutations(range(nv), r):
                steps = tuple((v, int(model.outcome_table[v, x0, q0])) for v in seq)
                if frozenset(steps) in seen:
                    continue
                seen.add(frozenset(steps))
                b = belief_from_realization(model, steps)
                consistent = np.ones((nx, nq), dtype=bool)
                for v, y in steps:
                    consistent &= model.outcome_table[v] == y
                joint = np.where(consistent, model.prior, 0.0)
                checks += 3
                bad += not np.array_equal(b.version_spaces, consistent.T)
                bad += not np.allclose(posterior(model, b).values, joint / joint.sum(), rtol=0, atol=1e-9)
                base = reward(model, b)
                post = joint / joint.sum()
                for v in range(nv):
                    expected = sum(
                        post[x, q] * (reward(model, update_belief(model, b, v, int(model.outcome_table[v, x, q]))) - base)
                        for x, q in zip(*np.nonzero(post))
                    )
                    checks += 1
                    bad += abs(marginal_benefit(model, b, v) - expected) > 1e-9
    return checks, bad


def test_criterion_1_oracle_equivalence(models):
    start = time.perf_counter()
    checks = bad = 0
    for m in models:
        c, b = oracle_mismatches(m)
        checks, bad = checks + c, bad + b
    elapsed = time.perf_counter() - start
    verdict(1, bad == 0 and elapsed < 10, f"{checks} oracle comparisons on {len(models)} models, {bad} mismatches, {elapsed:.2f} s (< 10 s)")


def test_criterion_2_adaptive_monotonicity(models):
    res = check_monotonicity(models, depth=3)
    verdict(2, res.passed, f"{res.checks} (belief, action) checks to depth 3, {len(res.violations)} negative benefits")


def test_criterion_3_factor_chain(models):
    chain = check_factor_chain(models, k=2)
    uniform = check_uniform_zeta_bar(random_models(SEED + 1, INSTANCES, uniform_modes=True), k=2)
    failed_links = sorted({v["link"] for v in chain.violations})
    detail = (
        f"chain links {chain.checks - len(chain.violations)}/{chain.checks} hold"
        + (f" (failing: {', '.join(failed_links)} on instances {sorted({v['instance'] for v in chain.violations})})" if failed_links else "")
        + f"; uniform-prior zeta_bar = |Q| on {uniform.checks - len(uniform.violations)}/{uniform.checks}"
    )
    verdict(3, chain.passed and uniform.passed, detail)


def test_criterion_4_greedy_bound(models):
    start = time.perf_counter()
    res = check_greedy_bound(models, max_k=3)
    elapsed = time.perf_counter() - start
    by_factor = {f: sum(v["factor"] == f for v in res.violations) for f in ("zeta_alg", "zeta_star")}
    verdict(
        4, res.passed and elapsed < 60,
        f"{res.checks} bound checks, {len(res.violations)} violations "
        f"(zeta_alg: {by_factor['zeta_alg']}, zeta_star: {by_factor['zeta_star']}), {elapsed:.1f} s (< 60 s)",
    )


def test_criterion_5_healthy_case():
    res = check_healthy_case(random_models(SEED + 2, INSTANCES, n_modes=1), max_k=3)
    verdict(5, res.passed, f"{res.checks} checks of zeta_star <= 1 and greedy > (1 - 1/e) OPT, {len(res.violations)} violations")


def test_criterion_6_form_equivalence(models):
    res = check_form_equivalence(models, depth=3)
    verdict(6, res.passed, f"{res.checks} reachable beliefs, {len(res.violations)} argmax-set disagreements")


def test_criterion_7_decomposition_oracles(models):
    rng = np.random.default_rng(SEED)
    b_bad = 0
    for _ in range(1000):
        tau = rng.exponential(size=int(rng.integers(1, 8)))
        s = tau * rng.uniform(size=tau.size)
        if s.sum() > 0 and b_function(tau) < b_function(s) - 1e-12:
            b_bad += 1
    low_zeta = 0
    for m in models:
        for b in reachable_realizations(m, 3).values():
            for v in range(len(m.actions)):
                low_zeta += min(delta_decomposition(m, b, v).zeta_y.values()) < 1 - 1e-9
    recomb = check_decomposition(models, depth=3)
    verdict(
        7, recomb.passed and b_bad == 0 and low_zeta == 0,
        f"recombination differs from the direct benefit in {len(recomb.violations)}/{recomb.checks} cases; "
        f"b monotone on 1000 pairs ({b_bad} violations); zeta_y < 1 in {low_zeta} cases",
    )


def test_criterion_8_preimage_examples():
    cases = [
        (SensorMode((HEALTHY, Flip(), HEALTHY)), (1, 0, 1), {(1, 1, 1)}),
        (SensorMode((HEALTHY, StuckAt(1), HEALTHY)), (1, 1, 1), {(1, 0, 1), (1, 1, 1)}),
        (SensorMode((HEALTHY, StuckAt(0), HEALTHY)), (1, 1, 1), set()),
    ]
    got = [preimage(q, y) for q, y, _ in cases]
    ok = all(g == want for g, (_, _, want) in zip(got, cases))
    verdict(8, ok, "flip -> {111}; stuck-at-1 -> {101, 111}; stuck-at-0 reading 1 -> empty")


def test_criterion_9_small_circuit_parity(tmp_path):
    model = build_model(CIRCUIT)
    assert model.shape == (64, 27, 16, 8)
    start = time.perf_counter()
    cfg = ExperimentConfig(circuit=CIRCUIT, budget=6, policies=["greedy-partition", "brute-force"], out=str(tmp_path), timing_repeats=1)
    summary = run_experiment(cfg)
    elapsed = time.perf_counter() - start
    rows = (tmp_path / "parity.csv").read_text().splitlines()
    equal = sum(p["equal"] for p in summary.parity)
    verdict(
        9, len(summary.parity) == 1728 and len(rows) == 1729 and equal / 1728 >= 0.95 and elapsed < 300,
        f"greedy k=6 matches brute force on {equal}/{len(summary.parity)} true pairs "
        f"({100 * equal / max(len(summary.parity), 1):.1f}%, need >= 95%), {elapsed:.1f} s (< 300 s)",
    )


def test_criterion_10_timing_scaling(tmp_path):
    scan = timing_scan(CIRCUIT, (1, 3, 9, 27), budget=6, sample=16, repeats=3, out=tmp_path / "timing.csv")
    lat = ", ".join(f"|Q|={n}: {t * 1e3:.4f} ms" for n, t, _ in scan.rows)
    verdict(10, scan.r_squared >= 0.95, f"linear fit R^2 = {scan.r_squared:.4f} (need >= 0.95); {lat}")
