"""Domain types shared by the curation pipeline and the lab.

Everything here is an immutable value object, safe to share between worker
threads.  Serialization lives with the CLI; these types only validate their
own invariants.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence


class TaskKind(str, Enum):
    CLASSIFICATION = "classification"
    GROUNDING = "grounding"
    GENERIC = "generic"


class DifficultyLabel(str, Enum):
    EASY = "easy"
    MEDIUM = "medium"
    HARD = "hard"


@dataclass(frozen=True, slots=True)
class BBox:
    """Axis-aligned box in pixel coordinates, origin top-left, x1 < x2 and y1 < y2."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self) -> None:
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValueError(f"degenerate box: ({self.x1},{self.y1},{self.x2},{self.y2})")
        if min(self.x1, self.y1) < 0:
            raise ValueError("box coordinates must be non-negative")

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def as_list(self) -> list[float]:
        return [self.x1, self.y1, self.x2, self.y2]


@dataclass(frozen=True, slots=True)
class GoldAnswer:
    """Ground truth for one sample; exactly one variant is populated."""

    label: str | None = None
    box: BBox | None = None
    answer: str | None = None

    def __post_init__(self) -> None:
        populated = sum(v is not None for v in (self.label, self.box, self.answer))
        if populated != 1:
            raise ValueError("GoldAnswer must populate exactly one of label/box/answer")
        if self.box is not None and not isinstance(self.box, BBox):
            # Accept the JSON-side four-number form and normalize it here so
            # everything downstream sees a validated BBox.
            object.__setattr__(self, "box", BBox(*(float(v) for v in self.box)))


_GOLD_FIELD_FOR_KIND = {
    TaskKind.CLASSIFICATION: "label",
    TaskKind.GROUNDING: "box",
    TaskKind.GENERIC: "answer",
}


@dataclass(frozen=True, slots=True)
class Sample:
    """One training instance: prompt, optional image reference, gold answer."""

    id: str
    task_kind: TaskKind
    prompt: str
    gold: GoldAnswer
    image_ref: str | None = None
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("sample id must be non-empty")
        want = _GOLD_FIELD_FOR_KIND[self.task_kind]
        if getattr(self.gold, want) is None:
            raise ValueError(
                f"sample {self.id!r}: task {self.task_kind.value} requires gold.{want}"
            )


@dataclass(frozen=True, slots=True)
class SamplingParams:
    """How responses are drawn: G per prompt, at the given temperature/top-p."""

    g: int = 8
    temperature: float = 0.9
    top_p: float = 1.0
    seed: int | None = None
    model_id: str = ""

    def __post_init__(self) -> None:
        if self.g < 2:
            raise ValueError("g must be >= 2; the difficulty taxonomy is degenerate for g=1")
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if not (0 < self.top_p <= 1):
            raise ValueError("top_p must lie in (0, 1]")


def classify_difficulty(rewards: Sequence[float]) -> DifficultyLabel:
    """Bucket a group of binary rewards: all correct -> easy, all wrong -> hard,
    any mixture -> medium."""
    if len(rewards) == 0:
        raise ValueError("cannot classify an empty reward list")
    total = sum(1 for r in rewards if r == 1)
    if total == len(rewards):
        return DifficultyLabel.EASY
    if total == 0:
        return DifficultyLabel.HARD
    return DifficultyLabel.MEDIUM


def reward_of(correct: bool) -> float:
    """Binary rule-based reward: 1.0 for a correct response, 0.0 otherwise."""
    return 1.0 if correct else 0.0


@dataclass(frozen=True, slots=True)
class VerifiedResponseSet:
    """A sample's G responses with their rewards and the derived difficulty."""

    sample_id: str
    responses: tuple[str, ...]
    rewards: tuple[float, ...]
    difficulty: DifficultyLabel
    params: SamplingParams

    def __post_init__(self) -> None:
        if len(self.responses) != len(self.rewards):
            raise ValueError("responses and rewards must have equal length")
        if len(self.rewards) != self.params.g:
            raise ValueError(
                f"{self.sample_id!r}: expected {self.params.g} rewards, got {len(self.rewards)}"
            )
        if self.difficulty is not classify_difficulty(self.rewards):
            raise ValueError(f"{self.sample_id!r}: difficulty label inconsistent with rewards")

    @classmethod
    def from_rewards(
        cls,
        sample_id: str,
        responses: Sequence[str],
        rewards: Sequence[float],
        params: SamplingParams,
    ) -> "VerifiedResponseSet":
        return cls(
            sample_id=sample_id,
            responses=tuple(responses),
            rewards=tuple(float(r) for r in rewards),
            difficulty=classify_difficulty(rewards),
            params=params,
        )
