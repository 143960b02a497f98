"""Tests for group-relative advantage normalization and the clipped surrogate.

Advantages are checked against a direct numpy re-derivation of
(r - mean) / (std + delta), which shares no code with the fsum-based
implementation.
"""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diffsift.grpo import (
    DEFAULT_BETA,
    DEFAULT_DELTA,
    DEFAULT_EPSILON,
    GrpoConfig,
    RewardGroup,
    SurrogateGroup,
    clipped_term,
    group_advantages,
    grpo_objective,
    is_zero_update_group,
    kl_categorical,
)


def numpy_advantages(rewards: list[float], delta: float, sample_std: bool) -> np.ndarray:
    r = np.asarray(rewards, dtype=np.float64)
    std = r.std(ddof=1 if sample_std else 0)
    return (r - r.mean()) / (std + delta)


class TestGroupAdvantages:
    def test_matches_numpy_oracle(self) -> None:
        rng = np.random.default_rng(3)
        for _ in range(500):
            g = int(rng.integers(2, 17))
            rewards = rng.uniform(-5, 5, size=g).tolist()
            for sample_std in (False, True):
                got = group_advantages(rewards, sample_std=sample_std)
                want = numpy_advantages(rewards, DEFAULT_DELTA, sample_std)
                assert np.max(np.abs(np.asarray(got) - want)) <= 1e-12

    def test_uniform_group_is_exact_zero(self) -> None:
        for value in (0.0, 1.0, 0.3333333333333333, -2.5):
            for g in range(2, 17):
                got = group_advantages([value] * g)
                assert got == [0.0] * g
                assert all(a == 0.0 for a in got)

    def test_binary_example_delta_to_zero(self) -> None:
        # Two correct out of eight: mean 0.25, population std sqrt(3)/4, so
        # correct responses normalize to +sqrt(3) and wrong ones to -1/sqrt(3).
        rewards = [1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
        adv = group_advantages(rewards, delta=1e-12)
        assert adv[0] == pytest.approx(math.sqrt(3), abs=1e-9)
        assert adv[2] == pytest.approx(-1 / math.sqrt(3), abs=1e-9)

    def test_sum_is_near_zero(self) -> None:
        rng = np.random.default_rng(4)
        for _ in range(500):
            g = int(rng.integers(2, 17))
            adv = group_advantages(rng.uniform(-10, 10, size=g).tolist())
            assert abs(math.fsum(adv)) <= 1e-12

    def test_validation(self) -> None:
        with pytest.raises(ValueError, match="at least 2"):
            group_advantages([1.0])
        with pytest.raises(ValueError, match="stabilizer"):
            group_advantages([1.0, 0.0], delta=0.0)

    @given(
        st.lists(st.floats(min_value=-100, max_value=100), min_size=2, max_size=16),
        st.floats(min_value=-50, max_value=50),
    )
    @settings(max_examples=200)
    def test_shift_invariance(self, rewards: list[float], shift: float) -> None:
        # Advantages depend only on deviations from the group mean, so a
        # common shift changes nothing (up to float association error).
        base = group_advantages(rewards)
        shifted = group_advantages([r + shift for r in rewards])
        assert np.allclose(base, shifted, atol=1e-9)


def test_is_zero_update_group() -> None:
    assert is_zero_update_group([1.0, 1.0, 1.0])
    assert is_zero_update_group([0.0, 0.0])
    assert not is_zero_update_group([1.0, 0.0])


class TestRewardGroup:
    def test_precomputed_fields_consistent(self) -> None:
        grp = RewardGroup.from_rewards([1.0, 0.0, 0.0, 1.0])
        assert grp.mean == 0.5
        assert grp.std == 0.5
        assert grp.advantages == tuple(group_advantages([1.0, 0.0, 0.0, 1.0]))
        assert not grp.is_zero_update
        assert RewardGroup.from_rewards([1.0, 1.0]).is_zero_update


class TestClippedTerm:
    def test_never_exceeds_unclipped(self) -> None:
        rng = np.random.default_rng(5)
        for _ in range(2000):
            ratio = float(rng.uniform(0.01, 3.0))
            adv = float(rng.uniform(-3, 3))
            eps = float(rng.uniform(0.05, 0.5))
            term = clipped_term(ratio, adv, eps)
            assert term <= ratio * adv + 1e-15
            clipped = min(max(ratio, 1 - eps), 1 + eps)
            assert term == min(ratio * adv, clipped * adv)

    def test_positive_advantage_capped_above(self) -> None:
        assert clipped_term(2.0, 1.0, 0.2) == 1.2
        assert clipped_term(1.1, 1.0, 0.2) == pytest.approx(1.1)

    def test_negative_advantage_unclipped_above(self) -> None:
        # For A < 0 and ratio above the band, the raw term is the minimum.
        assert clipped_term(2.0, -1.0, 0.2) == -2.0
        assert clipped_term(0.5, -1.0, 0.2) == -0.8

    def test_nonpositive_ratio_rejected(self) -> None:
        with pytest.raises(ValueError):
            clipped_term(0.0, 1.0, 0.2)
        with pytest.raises(ValueError):
            clipped_term(-1.0, 1.0, 0.2)


class TestGrpoObjective:
    def test_single_group_hand_computed(self) -> None:
        config = GrpoConfig(g=2, epsilon=0.2, beta=DEFAULT_BETA)
        group = SurrogateGroup.of(ratios=[[1.0], [1.0]], advantages=[1.0, -1.0])
        # With unit ratios the surrogate is the mean advantage: zero.
        assert grpo_objective([group], config) == 0.0

    def test_token_length_normalization(self) -> None:
        config = GrpoConfig(g=2, epsilon=0.5)
        one_tok = SurrogateGroup.of(ratios=[[1.1], [1.0]], advantages=[1.0, 0.0])
        two_tok = SurrogateGroup.of(ratios=[[1.1, 1.1], [1.0, 1.0]], advantages=[1.0, 0.0])
        assert grpo_objective([one_tok], config) == pytest.approx(
            grpo_objective([two_tok], config)
        )

    def test_group_size_mismatch_rejected(self) -> None:
        config = GrpoConfig(g=4)
        group = SurrogateGroup.of(ratios=[[1.0], [1.0]], advantages=[1.0, -1.0])
        with pytest.raises(ValueError, match="size 4"):
            grpo_objective([group], config)
        with pytest.raises(ValueError, match="no groups"):
            grpo_objective([], config)

    def test_zero_advantages_give_zero_objective(self) -> None:
        config = GrpoConfig(g=3)
        group = SurrogateGroup.of(
            ratios=[[0.7], [1.4], [1.0]], advantages=[0.0, 0.0, 0.0]
        )
        assert grpo_objective([group], config) == 0.0


class TestSurrogateGroup:
    def test_validation(self) -> None:
        with pytest.raises(ValueError):
            SurrogateGroup.of(ratios=[], advantages=[])
        with pytest.raises(ValueError):
            SurrogateGroup.of(ratios=[[1.0]], advantages=[1.0, 2.0])
        with pytest.raises(ValueError):
            SurrogateGroup.of(ratios=[[1.0], []], advantages=[1.0, 2.0])


class TestKlCategorical:
    def test_identical_distributions_zero(self) -> None:
        p = [0.2, 0.3, 0.5]
        assert kl_categorical(p, p) == 0.0

    def test_known_value(self) -> None:
        assert kl_categorical([1.0, 0.0], [0.5, 0.5]) == pytest.approx(math.log(2))

    def test_nonnegative_property(self) -> None:
        rng = np.random.default_rng(6)
        for _ in range(500):
            k = int(rng.integers(2, 12))
            p = rng.dirichlet(np.ones(k)).tolist()
            q = rng.dirichlet(np.ones(k)).tolist()
            assert kl_categorical(p, q) >= -1e-15

    def test_zero_p_entries_skipped(self) -> None:
        assert kl_categorical([0.0, 1.0], [0.5, 0.5]) == pytest.approx(math.log(2))

    def test_support_errors(self) -> None:
        with pytest.raises(ValueError, match="support"):
            kl_categorical([0.5, 0.5], [1.0])
        with pytest.raises(ValueError, match="strictly positive"):
            kl_categorical([0.5, 0.5], [1.0, 0.0])


class TestGrpoConfig:
    def test_defaults(self) -> None:
        cfg = GrpoConfig()
        assert cfg.g == 8
        assert cfg.epsilon == DEFAULT_EPSILON
        assert cfg.beta == DEFAULT_BETA
        assert cfg.delta == DEFAULT_DELTA
        assert cfg.sample_std is False

    @pytest.mark.parametrize(
        "kwargs",
        [{"g": 1}, {"epsilon": 0.0}, {"epsilon": 1.0}, {"beta": -0.1}, {"delta": 0.0}],
    )
    def test_invalid_rejected(self, kwargs) -> None:
        with pytest.raises(ValueError):
            GrpoConfig(**kwargs)
