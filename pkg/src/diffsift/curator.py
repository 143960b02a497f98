"""Difficulty-based curation: bucket verified samples, apply a curation
variant (medium-only, easy+medium, hard-ratio mixture, single bucket, or
everything), and emit a chat-format SFT dataset plus a manifest that makes
the draw reproducible byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

from . import __version__
from .core import BBox, DifficultyLabel, Sample, TaskKind, VerifiedResponseSet
from .sampler import build_messages
from .seeding import make_rng
from .verifiers import ImageSize, rescale_box


class CurationError(ValueError):
    """A curation plan cannot be satisfied by the given inputs."""


class CurationVariant(str, Enum):
    BUCKET_ONLY = "bucket"
    SFT_M = "sft-m"
    SFT_EM = "sft-em"
    HARD_RATIO = "hard-ratio"
    FULL = "full"


class BalanceMode(str, Enum):
    NONE = "none"
    MIN_SUBSET = "min"


@dataclass(frozen=True, slots=True)
class CurationPlan:
    variant: CurationVariant
    # Only consulted for the variant that needs it: bucket_label for
    # BUCKET_ONLY, hard_ratio for HARD_RATIO.
    bucket_label: DifficultyLabel | None = None
    hard_ratio: float | None = None
    balance: BalanceMode = BalanceMode.NONE
    seed: int = 0
    target_size: int | None = None

    def __post_init__(self) -> None:
        if self.variant is CurationVariant.BUCKET_ONLY and self.bucket_label is None:
            raise ValueError("bucket variant requires a bucket_label")
        if self.variant is CurationVariant.HARD_RATIO:
            if self.hard_ratio is None:
                raise ValueError("hard-ratio variant requires hard_ratio")
            if not (0.0 <= self.hard_ratio <= 1.0):
                raise ValueError("hard_ratio must lie in [0, 1]")
        if self.target_size is not None and self.target_size < 0:
            raise ValueError("target_size must be non-negative")

    def to_json(self) -> dict:
        return {
            "variant": self.variant.value,
            "bucket_label": None if self.bucket_label is None else self.bucket_label.value,
            "hard_ratio": self.hard_ratio,
            "balance": self.balance.value,
            "seed": self.seed,
            "target_size": self.target_size,
        }


Buckets = dict[DifficultyLabel, list[str]]


def bucket(verified: Sequence[VerifiedResponseSet]) -> Buckets:
    """Partition sample ids by difficulty.  Within each bucket ids are sorted
    so downstream seeded draws do not depend on input order."""
    out: Buckets = {label: [] for label in DifficultyLabel}
    for v in verified:
        out[v.difficulty].append(v.sample_id)
    for ids in out.values():
        ids.sort()
    return out


def balance_to_smallest(buckets: Buckets, seed: int) -> Buckets:
    """Uniformly subsample every bucket, without replacement, down to the
    smallest bucket's size.  Deterministic for a fixed seed."""
    if all(len(ids) == 0 for ids in buckets.values()):
        raise CurationError("cannot balance: every bucket is empty")
    floor = min(len(ids) for ids in buckets.values())
    out: Buckets = {}
    for label, ids in buckets.items():
        if len(ids) == floor:
            out[label] = list(ids)
            continue
        rng = make_rng(seed, "balance", label.value)
        keep = rng.permutation(len(ids))[:floor]
        out[label] = sorted(ids[i] for i in keep)
    return out


def input_digest(verified: Sequence[VerifiedResponseSet]) -> str:
    """Order-independent fingerprint of the verified inputs."""
    rows = sorted((v.sample_id, list(v.rewards), v.difficulty.value) for v in verified)
    blob = json.dumps(rows, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def pick_hard_count(n_em: int, n_hard: int, rho: float) -> int:
    """Number of hard samples to add to n_em kept samples so the hard fraction
    of the result is as close to rho as an integer count allows.

    The closeness target |k/(n_em+k) - rho| is unimodal in k, so checking the
    floor and ceiling of the real-valued optimum rho*n_em/(1-rho) finds the
    global best; ties prefer fewer hard samples.
    """
    if rho == 0.0:
        return 0
    if rho == 1.0:
        if n_em > 0:
            raise CurationError(
                "hard_ratio 1.0 is unreachable while keeping easy+medium samples; "
                f"max achievable is {n_hard / (n_em + n_hard):.4f}"
                if n_hard
                else "hard_ratio 1.0 is unreachable: no hard samples"
            )
        if n_hard == 0:
            raise CurationError("hard_ratio 1.0 is unreachable: no hard samples")
        return n_hard
    if n_em == 0:
        raise CurationError(
            "no easy or medium samples to anchor a hard-ratio mix; "
            "every nonempty selection would be all hard"
        )
    ideal = rho * n_em / (1.0 - rho)
    lo, hi = math.floor(ideal), math.ceil(ideal)
    best = min((lo, hi), key=lambda k: (abs(k / (n_em + k) - rho) if n_em + k else math.inf, k))
    if best > n_hard:
        total = n_em + n_hard
        max_rho = n_hard / total if total else 0.0
        raise CurationError(
            f"hard_ratio {rho} needs {best} hard samples but only {n_hard} exist; "
            f"max achievable ratio is {max_rho:.4f}"
        )
    return best


def _draw(ids: Sequence[str], k: int, seed: int, label: str) -> list[str]:
    """Seeded uniform draw of k ids, without replacement, returned sorted."""
    if k > len(ids):
        raise CurationError(f"cannot draw {k} ids from {len(ids)} ({label})")
    if k == len(ids):
        return sorted(ids)
    rng = make_rng(seed, "draw", label)
    keep = rng.permutation(len(ids))[:k]
    return sorted(ids[i] for i in keep)


@dataclass(frozen=True, slots=True)
class CurationManifest:
    input_digest: str
    plan: CurationPlan
    bucket_counts: dict[str, int]
    emitted_count: int
    draws: dict[str, list[str]]
    achieved_hard_ratio: float | None
    tool_version: str = __version__

    def __post_init__(self) -> None:
        if self.emitted_count != sum(len(v) for v in self.draws.values()):
            raise ValueError("emitted_count disagrees with the draw lists")

    def to_json(self) -> dict:
        return {
            "tool_version": self.tool_version,
            "input_digest": self.input_digest,
            "plan": self.plan.to_json(),
            "bucket_counts": self.bucket_counts,
            "emitted_count": self.emitted_count,
            "draws": self.draws,
            "achieved_hard_ratio": self.achieved_hard_ratio,
        }


def build_curated_set(
    verified: Sequence[VerifiedResponseSet], plan: CurationPlan
) -> tuple[list[str], CurationManifest]:
    """Select sample ids per the plan and describe the selection.

    The returned id list is shuffled by the plan seed (emission order); the
    manifest records the same ids sorted per source bucket.  Identical
    (verified, plan) inputs produce identical results.
    """
    buckets = bucket(verified)
    counts = {label.value: len(ids) for label, ids in buckets.items()}
    if plan.balance is BalanceMode.MIN_SUBSET:
        buckets = balance_to_smallest(buckets, plan.seed)

    easy = buckets[DifficultyLabel.EASY]
    medium = buckets[DifficultyLabel.MEDIUM]
    hard = buckets[DifficultyLabel.HARD]

    if plan.variant is CurationVariant.SFT_M:
        draws = {"medium": list(medium)}
    elif plan.variant is CurationVariant.SFT_EM:
        draws = {"easy": list(easy), "medium": list(medium)}
    elif plan.variant is CurationVariant.FULL:
        draws = {"easy": list(easy), "medium": list(medium), "hard": list(hard)}
    elif plan.variant is CurationVariant.BUCKET_ONLY:
        draws = {plan.bucket_label.value: list(buckets[plan.bucket_label])}
    elif plan.variant is CurationVariant.HARD_RATIO:
        k = pick_hard_count(len(easy) + len(medium), len(hard), plan.hard_ratio)
        draws = {
            "easy": list(easy),
            "medium": list(medium),
            "hard": _draw(hard, k, plan.seed, "hard"),
        }
    else:  # pragma: no cover - enum is closed
        raise CurationError(f"unknown variant {plan.variant!r}")

    if plan.target_size is not None:
        draws = _shrink_to_target(draws, plan)

    selected = [i for ids in draws.values() for i in ids]
    emitted = len(selected)
    hard_selected = len(draws.get("hard", []))
    achieved = hard_selected / emitted if emitted else None

    rng = make_rng(plan.seed, "shuffle")
    selected.sort()
    order = rng.permutation(emitted)
    shuffled = [selected[i] for i in order]

    manifest = CurationManifest(
        input_digest=input_digest(verified),
        plan=plan,
        bucket_counts=counts,
        emitted_count=emitted,
        draws=draws,
        achieved_hard_ratio=achieved,
    )
    return shuffled, manifest


def _shrink_to_target(draws: dict[str, list[str]], plan: CurationPlan) -> dict[str, list[str]]:
    """Subsample the selection down to target_size.

    A hard-ratio selection shrinks per bucket so the hard fraction of the
    smaller set still tracks the requested ratio; every other variant
    shrinks by one uniform draw over the whole selection.
    """
    total = sum(len(v) for v in draws.values())
    target = plan.target_size
    if target > total:
        raise CurationError(f"target_size {target} exceeds the {total} selected samples")
    if target == total:
        return draws
    if plan.variant is CurationVariant.HARD_RATIO and plan.hard_ratio > 0:
        k = min(
            (math.floor(plan.hard_ratio * target), math.ceil(plan.hard_ratio * target)),
            key=lambda c: (abs(c / target - plan.hard_ratio), c),
        )
        if k > len(draws["hard"]) or target - k > len(draws["easy"]) + len(draws["medium"]):
            raise CurationError(
                f"target_size {target} cannot hold hard_ratio {plan.hard_ratio} "
                "with the available buckets"
            )
        em_ids = sorted(draws["easy"] + draws["medium"])
        em_keep = set(_draw(em_ids, target - k, plan.seed, "target-em"))
        return {
            "easy": [i for i in draws["easy"] if i in em_keep],
            "medium": [i for i in draws["medium"] if i in em_keep],
            "hard": _draw(draws["hard"], k, plan.seed, "target-hard"),
        }
    pooled = sorted(i for ids in draws.values() for i in ids)
    keep = set(_draw(pooled, target, plan.seed, "target"))
    return {name: [i for i in ids if i in keep] for name, ids in draws.items()}


def render_gold(sample: Sample) -> str:
    """The assistant-turn text for a sample's ground truth.  Grounding boxes
    are emitted in the coordinates of the pixel-budget-rescaled image when
    the sample's meta records the original image size."""
    if sample.task_kind is TaskKind.CLASSIFICATION:
        return sample.gold.label
    if sample.task_kind is TaskKind.GENERIC:
        return sample.gold.answer
    box = sample.gold.box
    width = sample.meta.get("image_width")
    height = sample.meta.get("image_height")
    if width is not None and height is not None:
        box = rescale_box(box, ImageSize(int(width), int(height)))
    coords = [int(c) if float(c).is_integer() else c for c in box.as_list()]
    return "[" + ", ".join(str(c) for c in coords) + "]"


def sft_record(sample: Sample) -> dict:
    messages = build_messages(sample)
    messages.append({"role": "assistant", "content": render_gold(sample)})
    return {"messages": messages}


def emit_sft_dataset(
    ids: Sequence[str], samples: Sequence[Sample], path: str | Path, fmt: str = "messages"
) -> int:
    """Write one chat-format JSONL record per id, in the given order.
    Returns the number of records written."""
    if fmt != "messages":
        raise CurationError(f"unknown output format {fmt!r}")
    by_id = {s.id: s for s in samples}
    missing = [i for i in ids if i not in by_id]
    if missing:
        raise CurationError(f"ids not present in the dataset: {missing[:5]}")
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for i in ids:
            fh.write(json.dumps(sft_record(by_id[i]), ensure_ascii=False) + "\n")
    return len(ids)


def write_manifest(manifest: CurationManifest, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(manifest.to_json(), ensure_ascii=False, sort_keys=True, indent=2))
        fh.write("\n")


def difficulty_histogram(verified: Sequence[VerifiedResponseSet]) -> dict[str, int]:
    buckets_ = bucket(verified)
    return {label.value: len(ids) for label, ids in buckets_.items()}
