"""Difficulty-based curation of instruction-tuning data, plus a desk-scale
SFT/GRPO lab for checking what that curation does to generalization.

The pipeline half samples G responses per prompt from an OpenAI-compatible
endpoint, verifies them against gold answers, buckets prompts into
easy/medium/hard by the all-correct/all-wrong/mixed rule, and emits filtered
SFT datasets.  The lab half trains linear-softmax policies on synthetic
in-distribution / rotated out-of-distribution tasks with exact analytic
gradients, so the curation effects can be measured in seconds.
"""

__version__ = "0.1.0"

from .core import (
    BBox,
    DifficultyLabel,
    GoldAnswer,
    Sample,
    SamplingParams,
    TaskKind,
    VerifiedResponseSet,
    classify_difficulty,
    reward_of,
)
from .grpo import (
    GrpoConfig,
    RewardGroup,
    clipped_term,
    group_advantages,
    grpo_objective,
    is_zero_update_group,
    kl_categorical,
)

__all__ = [
    "BBox",
    "DifficultyLabel",
    "GoldAnswer",
    "GrpoConfig",
    "RewardGroup",
    "Sample",
    "SamplingParams",
    "TaskKind",
    "VerifiedResponseSet",
    "classify_difficulty",
    "clipped_term",
    "group_advantages",
    "grpo_objective",
    "is_zero_update_group",
    "kl_categorical",
    "reward_of",
    "__version__",
]
