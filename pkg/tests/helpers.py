"""Shared factories for the test suite."""

from __future__ import annotations

from diffsift.core import (
    GoldAnswer,
    Sample,
    SamplingParams,
    TaskKind,
    VerifiedResponseSet,
)


def make_sample(
    i: int = 0,
    kind: TaskKind = TaskKind.CLASSIFICATION,
    label: str = "cat",
) -> Sample:
    if kind is TaskKind.CLASSIFICATION:
        gold = GoldAnswer(label=label)
    elif kind is TaskKind.GROUNDING:
        gold = GoldAnswer(box=[10.0, 20.0, 30.0, 40.0])
    else:
        gold = GoldAnswer(answer=label)
    return Sample(
        id=f"s-{i:04d}",
        task_kind=kind,
        prompt=f"prompt {i}",
        gold=gold,
    )


def make_verified(
    sample_id: str,
    rewards: list[float],
    params: SamplingParams | None = None,
) -> VerifiedResponseSet:
    if params is None:
        params = SamplingParams(g=len(rewards))
    responses = [f"resp-{int(r)}" for r in rewards]
    return VerifiedResponseSet.from_rewards(
        sample_id=sample_id,
        responses=responses,
        rewards=rewards,
        params=params,
    )


def make_verified_mix(
    n_easy: int,
    n_medium: int,
    n_hard: int,
    g: int = 4,
    prefix: str = "v",
) -> list[VerifiedResponseSet]:
    """Verified sets with a known difficulty composition.  Labels cycle
    through the id sequence so bucket membership does not follow id order."""
    params = SamplingParams(g=g)
    rewards_for = {
        "easy": [1.0] * g,
        "medium": [1.0] + [0.0] * (g - 1),
        "hard": [0.0] * g,
    }
    remaining = {"easy": n_easy, "medium": n_medium, "hard": n_hard}
    out: list[VerifiedResponseSet] = []
    i = 0
    while any(remaining.values()):
        for label in ("medium", "hard", "easy"):
            if remaining[label] > 0:
                remaining[label] -= 1
                out.append(make_verified(f"{prefix}-{i:04d}", rewards_for[label], params))
                i += 1
    return out
