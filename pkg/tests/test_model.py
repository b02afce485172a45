import itertools
import json

import numpy as np
import pytest

from activediag import errors
from activediag.model import (
    DiagnosisModel,
    PartialRealization,
    belief_from_realization,
    compatible_states,
    initial_belief,
    load_model,
    posterior,
    reward,
    save_model,
    update_belief,
)

from conftest import sized_model


def brute_version_space(model, steps, q):
    """States consistent with every observed (v, y) under mode ``q``."""
    return {
        x
        for xi, x in enumerate(model.states)
        if all(model.outcome_table[v, xi, q] == y for v, y in steps)
    }


def reachable_steps(model, depth):
    """All realizations of distinct actions generated by some supported true pair."""
    out = set()
    for x, q in model.supported_pairs():
        for k in range(depth + 1):
            for seq in itertools.permutations(range(len(model.actions)), k):
                out.add(tuple((v, int(model.outcome_table[v, x, q])) for v in seq))
    return out


class TestConstruction:
    def test_rejects_bad_prior_sum(self):
        with pytest.raises(errors.ModelError, match="sums to"):
            DiagnosisModel(["a"], ["H"], ["v"], ["0"], [[0.5]], [[[0]]])

    def test_rejects_out_of_range_outcome(self):
        with pytest.raises(errors.ModelError, match="out of range"):
            DiagnosisModel(["a"], ["H"], ["v"], ["0"], [[1.0]], [[[3]]])

    def test_rejects_duplicate_ids(self):
        with pytest.raises(errors.ModelError, match="duplicate state"):
            DiagnosisModel(["a", "a"], ["H"], ["v"], ["0"], [[0.5], [0.5]], [[[0], [0]]])

    def test_arrays_are_read_only(self, two_state):
        with pytest.raises(ValueError):
            two_state.prior[0, 0] = 1.0

    def test_unknown_identifier(self, two_state):
        with pytest.raises(errors.UnknownIdentifierError):
            two_state.state_index("zz")


class TestCompatibleStates:
    def test_two_state(self, two_state):
        assert compatible_states(two_state, "0", "v0", "H") == {"a"}
        assert compatible_states(two_state, "1", "v0", "H") == {"b"}

    def test_partition_of_states(self):
        m = sized_model(0)
        for v, q in itertools.product(m.actions, m.modes):
            parts = [compatible_states(m, y, v, q) for y in m.outcomes]
            assert set().union(*parts) == set(m.states)
            assert sum(len(p) for p in parts) == len(m.states)


class TestUpdate:
    def test_matches_filter_oracle(self):
        for seed in range(10):
            m = sized_model(seed)
            for steps in reachable_steps(m, 2):
                b = belief_from_realization(m, steps)
                for q in range(len(m.modes)):
                    assert b.version_space(m, q) == brute_version_space(m, steps, q)

    def test_idempotent(self):
        m = sized_model(3)
        x, q = m.supported_pairs()[0]
        y = int(m.outcome_table[0, x, q])
        once = update_belief(m, initial_belief(m), 0, y)
        twice = update_belief(m, once, 0, y)
        np.testing.assert_array_equal(once.version_spaces, twice.version_spaces)

    def test_order_invariant(self):
        m = sized_model(4)
        for x, q in m.supported_pairs():
            steps = [(v, int(m.outcome_table[v, x, q])) for v in range(len(m.actions))]
            a = belief_from_realization(m, steps)
            b = belief_from_realization(m, steps[::-1])
            np.testing.assert_array_equal(a.version_spaces, b.version_spaces)
            assert a.realization_probability == pytest.approx(b.realization_probability, abs=1e-15)

    def test_contradiction_leaves_belief_intact(self, two_state):
        b = update_belief(two_state, initial_belief(two_state), "v0", "0")
        before = b.version_spaces.copy()
        with pytest.raises(errors.ContradictionError):
            update_belief(two_state, b, "v0", "1")
        np.testing.assert_array_equal(b.version_spaces, before)

    def test_realization_records_steps(self, two_state):
        b = update_belief(two_state, initial_belief(two_state), "v0", "1")
        assert b.realization == PartialRealization(((0, 1),))
        assert b.realization.labels(two_state) == [("v0", "1")]
        assert b.t == 1 and b.taken == {0}


class TestPosterior:
    def test_matches_bayes_oracle(self):
        for seed in range(10):
            m = sized_model(seed)
            for steps in reachable_steps(m, 2):
                b = belief_from_realization(m, steps)
                like = np.ones_like(m.prior)
                for v, y in steps:
                    like *= m.outcome_table[v] == y
                joint = like * m.prior
                np.testing.assert_allclose(posterior(m, b).values, joint / joint.sum(), atol=1e-12)

    def test_initial_is_prior(self, two_state):
        p = posterior(two_state, initial_belief(two_state))
        assert p["a", "H"] == 0.5
        np.testing.assert_allclose(p.state_marginal(), [0.5, 0.5])


class TestReward:
    def test_zero_before_any_action(self, two_state):
        assert reward(two_state, initial_belief(two_state)) == 0.0

    def test_two_state_after_discriminating_action(self, two_state):
        b = update_belief(two_state, initial_belief(two_state), "v0", "0")
        assert reward(two_state, b) == 0.5

    def test_matches_definition(self):
        m = sized_model(5)
        for steps in reachable_steps(m, 2):
            b = belief_from_realization(m, steps)
            alive = set().union(*(brute_version_space(m, steps, q) for q in range(len(m.modes))))
            expected = 1 - sum(m.state_prior[m.state_index(x)] for x in alive)
            assert reward(m, b) == pytest.approx(expected, abs=1e-12)


class TestLoader:
    def test_round_trip(self, tmp_path):
        m = sized_model(6)
        path = tmp_path / "m.json"
        save_model(m, path)
        back = load_model(path)
        assert back.states == m.states and back.modes == m.modes
        np.testing.assert_array_equal(back.outcome_table, m.outcome_table)
        np.testing.assert_allclose(back.prior, m.prior, rtol=0, atol=0)

    def test_syntax_error_has_position(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"states": [\n  "a",\n}')
        with pytest.raises(errors.ModelError, match=r"line 3 column 1"):
            load_model(path)

    def test_non_total_table_is_reported(self, tmp_path, two_state):
        doc = two_state.to_dict()
        doc["outcome_table"][0].pop()
        path = tmp_path / "m.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(errors.ModelError, match="outcome_table"):
            load_model(path)
