import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from activediag.errors import SizeCapError
from activediag.faults import FaultSpec, HealthyTable, SensorFaults, StuckAt, compile_model
from activediag.generate import random_models
from activediag.guarantees import (
    factor_sweep,
    b_function,
    compute_zeta_sweep,
    compute_zeta_bar,
    delta_decomposition,
    empirical_zeta_star,
    factor_report,
    guarantee_bound,
    reachable_realizations,
    zeta_star_search,
)
from activediag.model import initial_belief
from activediag.policies import marginal_benefit, marginal_benefits

from conftest import sized_model


def walker_zeta(model, k):
    """Breadth-first walk over (true pair, action sequence) with plain sets;
    returns the largest union-over-joint ratio seen after steps 1..k."""
    states = range(len(model.states))
    modes = range(len(model.modes))
    best = 0.0
    level = [
        (x0, q0, {q: set(states) for q in modes})
        for x0, q0 in itertools.product(states, modes)
        if model.prior[x0, q0] > 0
    ]
    for _ in range(k):
        nxt = []
        for x0, q0, spaces in level:
            for v in range(len(model.actions)):
                y0 = model.outcome_table[v, x0, q0]
                child = {q: {x for x in s if model.outcome_table[v, x, q] == y0} for q, s in spaces.items()}
                nxt.append((x0, q0, child))
                for cv, cy in itertools.product(range(len(model.actions)), range(len(model.outcomes))):
                    bar = {q: {x for x in s if model.outcome_table[cv, x, q] == cy} for q, s in child.items()}
                    den = sum(model.prior[x, q] for q, s in bar.items() for x in s)
                    if den <= 0:
                        continue
                    num = sum(model.state_prior[x] for x in set().union(*bar.values()))
                    best = max(best, num / den)
        level = nxt
    return best


def stuck_revealing_model(p_stuck=0.5):
    """Two states, one sensor that may be stuck at 1.

    ``sep`` reads 0 for ``a`` and 1 for ``b``; ``probe`` reads 0 for both, so
    it says nothing about the state but reveals whether the sensor is stuck.
    """
    table = HealthyTable(("a", "b"), ("sep", "probe"), ("s",), np.array([[[0], [1]], [[0], [0]]]))
    spec = FaultSpec(("s",), (SensorFaults("s", (StuckAt(1),), (p_stuck,)),))
    return compile_model(table, spec)


class TestBFunction:
    def test_examples(self):
        assert b_function([1, 1]) == 1.0
        assert b_function([0.7]) == 0.0
        assert b_function([0.5, 0.5]) == 0.5
        assert b_function([1, 2, 0]) == pytest.approx(3 - 5 / 3)

    def test_rejects_zero_and_negative(self):
        with pytest.raises(ValueError):
            b_function([0, 0])
        with pytest.raises(ValueError):
            b_function([1, -0.1])

    def test_monotone_random_pairs(self, rng):
        for _ in range(1000):
            n = int(rng.integers(1, 8))
            tau = rng.exponential(size=n)
            s = tau * rng.uniform(size=n)
            if s.sum() <= 0:
                continue
            assert b_function(tau) >= b_function(s) - 1e-12

    @given(st.lists(st.floats(0, 10), min_size=1, max_size=6).filter(lambda t: sum(t) > 1e-6), st.integers(0, 5), st.floats(0, 5))
    def test_monotone_single_coordinate(self, tau, i, bump):
        bumped = list(tau)
        bumped[i % len(tau)] += bump
        assert b_function(bumped) >= b_function(tau) - 1e-9


class TestGuaranteeBound:
    def test_classical(self):
        assert guarantee_bound(1, 3, 3) == pytest.approx(1 - 1 / math.e)

    def test_uniform_modes(self):
        assert guarantee_bound(27, 6, 6) == pytest.approx(1 - math.exp(-1 / 27))

    def test_long_run_limit(self):
        assert guarantee_bound(2, 1, 10_000) == pytest.approx(1.0)

    def test_infinite_factor_is_vacuous(self):
        assert guarantee_bound(math.inf, 2, 2) == 0.0

    def test_domain(self):
        with pytest.raises(ValueError):
            guarantee_bound(0.5, 1, 1)
        with pytest.raises(ValueError):
            guarantee_bound(1, 0, 1)


class TestAlgorithm1:
    def test_single_mode_is_one(self):
        for m in random_models(21, 20, n_modes=1):
            assert compute_zeta_sweep(m, 2) == 1.0
            assert compute_zeta_bar(m, 2) == 1.0

    def test_uniform_modes_give_mode_count(self):
        for m in random_models(22, 20, uniform_modes=True):
            sweep = factor_sweep(m, 2)
            assert sweep.zeta_bar == pytest.approx(len(m.modes), abs=1e-9)
            assert sweep.zeta <= sweep.zeta_bar + 1e-9

    def test_matches_breadth_first_walker(self):
        for seed in range(5):
            m = sized_model(seed, nx=5, nq=3, nv=3)
            assert compute_zeta_sweep(m, 2) == pytest.approx(walker_zeta(m, 2), abs=1e-12)

    def test_bar_dominates_and_bounded(self, generated):
        for m in generated:
            sweep = factor_sweep(m, 2)
            assert 1 - 1e-9 <= sweep.zeta <= sweep.zeta_bar + 1e-9
            assert sweep.zeta_bar <= len(m.modes) / m.min_positive_prior + 1e-9

    def test_witness_reproduces_value(self):
        m = sized_model(7)
        sweep = factor_sweep(m, 2)
        assert sweep.witness.ratio == sweep.zeta

    def test_cap(self, circuit_model):
        with pytest.raises(SizeCapError):
            factor_sweep(circuit_model, 6)


class TestEmpiricalZetaStar:
    def test_single_mode_is_submodular(self):
        for m in random_models(23, 20, n_modes=1):
            assert empirical_zeta_star(m, 3) <= 1 + 1e-9

    def test_constructed_instance_exceeds_one(self):
        m = stuck_revealing_model(0.5)
        root = initial_belief(m)
        assert marginal_benefit(m, root, "sep") == pytest.approx(0.25 * 0.5)
        search = zeta_star_search(m, 2)
        assert search.value == pytest.approx(2 / (1 - 0.5))
        assert search.witness.action == "sep"
        assert search.witness.realization == (("probe", "0"),)

    def test_matches_direct_pair_enumeration(self):
        m = sized_model(8, nx=4, nq=2, nv=3)
        real = reachable_realizations(m, 2)
        best = 1.0
        for hi, lo in itertools.product(real, repeat=2):
            if not lo <= hi:
                continue
            for v in set(range(len(m.actions))) - {a for a, _ in hi}:
                d_lo = marginal_benefit(m, real[lo], v)
                if d_lo > 1e-12:
                    best = max(best, marginal_benefit(m, real[hi], v) / d_lo)
        assert empirical_zeta_star(m, 2) == pytest.approx(best, abs=1e-12)


class TestDecomposition:
    def test_masses(self, generated):
        for m in generated[:20]:
            for b in reachable_realizations(m, 2).values():
                for v in range(len(m.actions)):
                    dec = delta_decomposition(m, b, v)
                    assert sum(dec.tau.values()) == pytest.approx(b.realization_probability, abs=1e-12)
                    for y, z in dec.zeta_y.items():
                        assert z * dec.tau[y] == pytest.approx(dec.union_mass[y], abs=1e-12)

    def test_zeta_y_at_least_one(self, generated):
        for m in generated:
            for b in reachable_realizations(m, 2).values():
                for v in range(len(m.actions)):
                    assert min(delta_decomposition(m, b, v).zeta_y.values()) >= 1 - 1e-9

    def test_pairwise_form(self, generated):
        for m in generated[:20]:
            b = initial_belief(m)
            for v in range(len(m.actions)):
                dec = delta_decomposition(m, b, v)
                assert dec.pairwise_form() == pytest.approx(dec.recombined(), abs=1e-12)
                assert dec.pairwise_form() >= 0

    def test_single_mode_reduces_to_b(self):
        for m in random_models(24, 20, n_modes=1):
            for b in reachable_realizations(m, 2).values():
                for v in range(len(m.actions)):
                    dec = delta_decomposition(m, b, v)
                    assert set(dec.zeta_y.values()) == {1.0}
                    assert marginal_benefit(m, b, v) == pytest.approx(dec.b(), abs=1e-12)
                    assert dec.recombined() == pytest.approx(dec.b(), abs=1e-12)

    def test_overlap_corrected_identity(self, generated):
        """Removing the mass counted under several outcomes recovers the benefit."""
        for m in generated:
            for b in reachable_realizations(m, 2).values():
                alive = float(m.state_prior @ b.indistinguishable())
                deltas = marginal_benefits(m, b)
                for v in range(len(m.actions)):
                    dec = delta_decomposition(m, b, v)
                    assert dec.recombined() - dec.outcome_overlap(alive) == pytest.approx(deltas[v], abs=1e-9)

    def test_recombination_exact_without_overlap(self, generated):
        hits = 0
        for m in generated:
            for b in reachable_realizations(m, 2).values():
                alive = float(m.state_prior @ b.indistinguishable())
                for v in range(len(m.actions)):
                    dec = delta_decomposition(m, b, v)
                    if abs(dec.outcome_overlap(alive)) <= 1e-12:
                        hits += 1
                        assert dec.recombined() == pytest.approx(marginal_benefit(m, b, v), abs=1e-9)
        assert hits > 0

    def test_overlapping_outcomes_exist(self):
        """With a stuck-at sensor, the state that reads 1 survives both outcomes."""
        m = stuck_revealing_model(0.5)
        b = initial_belief(m)
        dec = delta_decomposition(m, b, "sep")
        assert dec.outcome_overlap(1.0) == pytest.approx(0.5)
        assert dec.recombined() != pytest.approx(marginal_benefit(m, b, "sep"))


class TestFactorReport:
    def test_fields_and_serialization(self):
        m = sized_model(9)
        rep = factor_report(m, 2)
        d = rep.to_dict()
        assert d["k"] == 2 and d["depth"] == 2
        assert rep.upper_bound == pytest.approx(len(m.modes) / m.min_positive_prior)
        assert [name for name, *_ in rep.chain()] == [
            "1 <= zeta_star", "zeta_star <= zeta_alg", "zeta_alg <= zeta_bar", "zeta_bar <= upper_bound"
        ]
        assert rep.zeta_alg >= rep.zeta_alg_single_pair - 1e-12
