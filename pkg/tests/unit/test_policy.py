"""
Unit tests for redvit.attack.policy.
"""
import numpy as np
import pytest

from redvit.attack.policy import (
    init_policy, materialize, project_row, reinforce_update, sample_op_sets, sample_schedule,
)
from redvit.config.experiment import OP_NAMES, OpsConfig
from redvit.errors import ConfigError, ContractError
from redvit.model.redundancy import OpKind
from redvit.rng import StreamKey, stream


def assert_valid_rows(policy):
    np.testing.assert_allclose(policy.matrix.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(policy.matrix >= policy.prob_floor - 1e-15)
    assert np.all(policy.matrix <= 1.0)


class TestInitPolicy:
    """Tests for policy construction."""

    def test_uniform(self, uniform_policy):
        assert uniform_policy.matrix.shape == (4, 5)
        np.testing.assert_array_equal(uniform_policy.matrix, np.full((4, 5), 0.2))
        assert uniform_policy.matrix.size == 20

    def test_rows_sum_to_one(self):
        policy = init_policy(3, OP_NAMES[:3], 1, 0.05, 0.01)
        np.testing.assert_allclose(policy.matrix.sum(axis=1), 1.0, atol=1e-15)

    @pytest.mark.parametrize("s, floor", [(6, 0.01), (-1, 0.01), (1, 0.2), (1, -0.1)])
    def test_invalid_settings(self, s, floor):
        with pytest.raises(ConfigError):
            init_policy(4, OP_NAMES, s, 0.05, floor)

    def test_to_dict(self, uniform_policy):
        data = uniform_policy.to_dict()
        assert data["pool"] == list(OP_NAMES)
        assert len(data["matrix"]) == 4


class TestSampling:
    """Tests for sampling operation sets."""

    def test_zero_draws_gives_empty_blocks(self):
        policy = init_policy(4, OP_NAMES, 0, 0.05, 0.01)
        sets, mods = sample_schedule(policy, stream(0, op="policy"), OpsConfig(), StreamKey(0))
        assert sets == ((), (), (), ())
        assert all(m.ops == () for m in mods)

    def test_exhaustive_draws_give_every_op_in_canonical_order(self):
        policy = init_policy(2, OP_NAMES, 5, 0.05, 0.01)
        sets, mods = sample_schedule(policy, stream(1, op="policy"), OpsConfig(), StreamKey(1))
        assert all(sorted(s) == sorted(OP_NAMES) for s in sets)
        assert all(m.kinds == (OpKind.CLEAN, OpKind.PERMUTE, OpKind.SPARSIFY, OpKind.MOE) for m in mods)

    def test_draws_are_distinct_within_a_block(self):
        policy = init_policy(6, OP_NAMES, 3, 0.05, 0.01)
        for sets in (sample_op_sets(policy, stream(2, iteration=i)) for i in range(20)):
            assert all(len(set(s)) == 3 for s in sets)

    def test_dominant_op_is_drawn_first(self):
        """A row with mass 1 - 4 floor on one op draws it first in at least 95% of draws."""
        policy = init_policy(1, OP_NAMES, 2, 0.05, 0.005)
        policy.matrix[0] = [0.005, 0.005, 0.98, 0.005, 0.005]
        firsts = [sample_op_sets(policy, stream(3, iteration=i))[0][0] for i in range(1000)]
        assert firsts.count("permute") >= 950

    def test_same_stream_same_sets(self, uniform_policy):
        a = sample_op_sets(uniform_policy, stream(4, image=2, iteration=7, op="policy"))
        b = sample_op_sets(uniform_policy, stream(4, image=2, iteration=7, op="policy"))
        assert a == b

    def test_each_block_gets_its_own_stream(self):
        mods = materialize((("sparsify",), ("sparsify",)), OpsConfig(), StreamKey(5, image=1, iteration=2))
        first, second = mods[0].ops[0], mods[1].ops[0]
        assert first.stream == StreamKey(5, image=1, iteration=2, block=0, op="sparsify")
        assert first.stream != second.stream


class TestReinforceUpdate:
    """Tests for the REINFORCE update and its projection."""

    def test_hand_example(self):
        """Uniform row, s = 1, op 2 sampled, lr 0.01, A = 1."""
        policy = init_policy(1, OP_NAMES, 1, 0.01, 0.01)
        updated = reinforce_update(policy, (("permute",),), 1.0)
        np.testing.assert_allclose(updated.matrix[0], [0.19048, 0.19048, 0.23810, 0.19048, 0.19048], atol=1e-5)

    def test_zero_advantage_keeps_matrix(self, uniform_policy):
        sets = (("identity",), ("moe",), ("clean",), ("sparsify",))
        updated = reinforce_update(uniform_policy, sets, 0.0)
        np.testing.assert_array_equal(updated.matrix, uniform_policy.matrix)

    def test_positive_advantage_raises_sampled_entries(self, uniform_policy):
        sets = (("identity",), ("moe",), ("clean",), ("sparsify",))
        updated = reinforce_update(uniform_policy, sets, 2.0)
        for layer, (name,) in enumerate(sets):
            o = OP_NAMES.index(name)
            assert updated.matrix[layer, o] > 0.2
            others = np.delete(updated.matrix[layer], o)
            assert np.all(others < 0.2)

    def test_baseline_tracks_rewards(self, uniform_policy):
        sets = (("identity",),) * 4
        updated = reinforce_update(uniform_policy, sets, 1.0)
        assert updated.baseline == pytest.approx(0.1)
        assert uniform_policy.baseline == 0.0

    def test_update_does_not_mutate(self, uniform_policy):
        before = uniform_policy.matrix.copy()
        reinforce_update(uniform_policy, (("moe",),) * 4, 5.0)
        np.testing.assert_array_equal(uniform_policy.matrix, before)

    def test_rejects_unknown_op(self, uniform_policy):
        with pytest.raises(ContractError):
            reinforce_update(uniform_policy, (("warp",),) * 4, 1.0)

    def test_rejects_wrong_block_count(self, uniform_policy):
        with pytest.raises(ContractError):
            reinforce_update(uniform_policy, (("moe",),), 0.0)

    def test_large_negative_rewards_respect_floor(self, uniform_policy):
        policy = uniform_policy
        for i in range(50):
            sets = sample_op_sets(policy, stream(6, iteration=i))
            policy = reinforce_update(policy, sets, -10.0 * (i % 3))
            assert_valid_rows(policy)

    def test_project_row_pins_floor(self):
        row = project_row(np.array([1.5, -0.4, 0.002, 0.3]), 0.01)
        assert row.sum() == pytest.approx(1.0, abs=1e-12)
        assert row[1] == 0.01 and row[2] == 0.01

    def test_bandit_concentrates_on_winner(self):
        """One dominant op: its probability passes 0.9 in every row within 500 updates."""
        policy = init_policy(1, OP_NAMES, 1, 0.05, 0.01)
        for i in range(500):
            sets = sample_op_sets(policy, stream(7, iteration=i, op="bandit"))
            reward = float(np.mean([names[0] == "clean" for names in sets]))
            policy = reinforce_update(policy, sets, reward)
            assert_valid_rows(policy)
        assert np.all(policy.matrix[:, OP_NAMES.index("clean")] > 0.9)
