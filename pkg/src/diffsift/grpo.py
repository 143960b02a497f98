"""Group-relative policy optimization arithmetic.

The pieces here are exact and scalar: group-normalized advantages, the
clipped importance-ratio surrogate, categorical KL, and the predicate that
makes uniform-reward groups contribute nothing to the update.  The lab's
trainers vectorize the same formulas; tests pin the two routes together.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

DEFAULT_DELTA = 1e-4
DEFAULT_EPSILON = 0.2
DEFAULT_BETA = 0.04


@dataclass(frozen=True, slots=True)
class GrpoConfig:
    """Knobs for the surrogate: group size, clip width, KL weight, std stabilizer.

    ``sample_std`` switches the advantage denominator to the Bessel-corrected
    standard deviation; the population convention is the default.
    """

    g: int = 8
    epsilon: float = DEFAULT_EPSILON
    beta: float = DEFAULT_BETA
    delta: float = DEFAULT_DELTA
    sample_std: bool = False

    def __post_init__(self) -> None:
        if self.g < 2:
            raise ValueError("group size must be >= 2")
        if not (0 < self.epsilon < 1):
            raise ValueError("clip width must lie in (0, 1)")
        if self.beta < 0:
            raise ValueError("KL weight must be >= 0")
        if self.delta <= 0:
            raise ValueError("std stabilizer must be > 0")


def group_advantages(
    rewards: Sequence[float],
    delta: float = DEFAULT_DELTA,
    sample_std: bool = False,
) -> list[float]:
    """Normalize a group of rewards: (r - mean) / (std + delta).

    Uses the population standard deviation unless ``sample_std`` is set.
    A group whose rewards are all equal normalizes to exact zeros; no
    floating-point residue is allowed to leak through, because those zeros
    are what filters the group out of the update.
    """
    g = len(rewards)
    if g < 2:
        raise ValueError("need at least 2 rewards to normalize a group")
    if delta <= 0:
        raise ValueError("std stabilizer must be > 0")
    rewards = [float(r) for r in rewards]
    if max(rewards) == min(rewards):
        return [0.0] * g
    mean = math.fsum(rewards) / g
    var = math.fsum((r - mean) ** 2 for r in rewards) / (g - 1 if sample_std else g)
    std = math.sqrt(var)
    return [(r - mean) / (std + delta) for r in rewards]


def is_zero_update_group(rewards: Sequence[float]) -> bool:
    """True iff all rewards in the group are equal, i.e. every advantage is
    exactly zero and the surrogate gradient vanishes for any ratios."""
    return max(rewards) == min(rewards)


@dataclass(frozen=True, slots=True)
class RewardGroup:
    """A reward group with its normalization precomputed."""

    rewards: tuple[float, ...]
    mean: float
    std: float
    advantages: tuple[float, ...]

    @classmethod
    def from_rewards(
        cls,
        rewards: Sequence[float],
        delta: float = DEFAULT_DELTA,
        sample_std: bool = False,
    ) -> "RewardGroup":
        rewards = tuple(float(r) for r in rewards)
        g = len(rewards)
        advantages = tuple(group_advantages(rewards, delta, sample_std))
        mean = math.fsum(rewards) / g
        var = math.fsum((r - mean) ** 2 for r in rewards) / (g - 1 if sample_std else g)
        return cls(rewards=rewards, mean=mean, std=math.sqrt(var), advantages=advantages)

    @property
    def is_zero_update(self) -> bool:
        return is_zero_update_group(self.rewards)


def clipped_term(ratio: float, advantage: float, epsilon: float) -> float:
    """min(ratio * A, clip(ratio, 1-eps, 1+eps) * A) for one token."""
    if ratio <= 0:
        raise ValueError("importance ratio must be > 0")
    clipped = min(max(ratio, 1.0 - epsilon), 1.0 + epsilon)
    return min(ratio * advantage, clipped * advantage)


@dataclass(frozen=True, slots=True)
class SurrogateGroup:
    """Per-prompt surrogate inputs: token ratios per response plus one
    advantage per response."""

    ratios: tuple[tuple[float, ...], ...]
    advantages: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.ratios) == 0:
            raise ValueError("group has no responses")
        if len(self.ratios) != len(self.advantages):
            raise ValueError("one advantage per response is required")
        if any(len(tok) == 0 for tok in self.ratios):
            raise ValueError("every response needs at least one token ratio")

    @classmethod
    def of(
        cls,
        ratios: Sequence[Sequence[float]],
        advantages: Sequence[float],
    ) -> "SurrogateGroup":
        return cls(
            ratios=tuple(tuple(float(r) for r in resp) for resp in ratios),
            advantages=tuple(float(a) for a in advantages),
        )


def grpo_objective(groups: Sequence[SurrogateGroup], config: GrpoConfig) -> float:
    """Clipped surrogate objective: per response, the length-normalized sum of
    clipped terms; averaged over the group, then over prompts."""
    if len(groups) == 0:
        raise ValueError("no groups supplied")
    total = 0.0
    for group in groups:
        if len(group.ratios) != config.g:
            raise ValueError(f"expected groups of size {config.g}, got {len(group.ratios)}")
        per_response = [
            math.fsum(clipped_term(r, a, config.epsilon) for r in tokens) / len(tokens)
            for tokens, a in zip(group.ratios, group.advantages)
        ]
        total += math.fsum(per_response) / config.g
    return total / len(groups)


def kl_categorical(p: Sequence[float], q: Sequence[float]) -> float:
    """KL divergence between two categorical distributions on the same support."""
    if len(p) != len(q):
        raise ValueError(f"support mismatch: {len(p)} vs {len(q)}")
    total = 0.0
    for pi, qi in zip(p, q):
        if pi == 0:
            continue
        if qi <= 0:
            raise ValueError("q must be strictly positive wherever p > 0")
        total += pi * math.log(pi / qi)
    return total
