"""JSONL reading and writing for samples and verified response sets.

Dataset lines look like::

    {"id": "s1", "task": "classification", "prompt": "...", "image": "a.jpg",
     "gold": {"label": "cat"}, "meta": {"image_width": "1024"}}

``gold`` carries exactly one of ``label`` (classification), ``box``
(grounding, as [x1, y1, x2, y2]) or ``answer`` (generic).
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable

from .core import (
    BBox,
    DifficultyLabel,
    GoldAnswer,
    Sample,
    SamplingParams,
    TaskKind,
    VerifiedResponseSet,
)


class DatasetError(ValueError):
    """Malformed dataset file; message carries the offending line number."""


def _gold_from_json(obj: dict) -> GoldAnswer:
    if not isinstance(obj, dict) or len(obj) != 1:
        raise ValueError("gold must be an object with exactly one of label/box/answer")
    if "label" in obj:
        return GoldAnswer(label=str(obj["label"]))
    if "box" in obj:
        coords = obj["box"]
        if not (isinstance(coords, list) and len(coords) == 4):
            raise ValueError("gold.box must be a four-number list")
        return GoldAnswer(box=BBox(*(float(v) for v in coords)))
    if "answer" in obj:
        return GoldAnswer(answer=str(obj["answer"]))
    raise ValueError("gold must contain one of label/box/answer")


def _gold_to_json(gold: GoldAnswer) -> dict:
    if gold.label is not None:
        return {"label": gold.label}
    if gold.box is not None:
        return {"box": gold.box.as_list()}
    return {"answer": gold.answer}


def sample_from_json(obj: dict) -> Sample:
    for key in ("id", "task", "prompt", "gold"):
        if key not in obj:
            raise ValueError(f"missing required field {key!r}")
    meta = obj.get("meta") or {}
    return Sample(
        id=str(obj["id"]),
        task_kind=TaskKind(obj["task"]),
        prompt=str(obj["prompt"]),
        gold=_gold_from_json(obj["gold"]),
        image_ref=obj.get("image"),
        meta={str(k): str(v) for k, v in meta.items()},
    )


def sample_to_json(sample: Sample) -> dict:
    obj: dict = {
        "id": sample.id,
        "task": sample.task_kind.value,
        "prompt": sample.prompt,
        "gold": _gold_to_json(sample.gold),
    }
    if sample.image_ref is not None:
        obj["image"] = sample.image_ref
    if sample.meta:
        obj["meta"] = dict(sample.meta)
    return obj


def load_dataset(path: str | Path) -> list[Sample]:
    """Read a JSONL dataset, in file order.  Duplicate ids are rejected."""
    samples: list[Sample] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                sample = sample_from_json(json.loads(line))
            except (json.JSONDecodeError, ValueError, KeyError) as exc:
                raise DatasetError(f"{path}:{lineno}: {exc}") from exc
            if sample.id in seen:
                raise DatasetError(f"{path}:{lineno}: duplicate sample id {sample.id!r}")
            seen.add(sample.id)
            samples.append(sample)
    return samples


def write_dataset(samples: Iterable[Sample], path: str | Path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for sample in samples:
            fh.write(json.dumps(sample_to_json(sample), ensure_ascii=False) + "\n")
            n += 1
    return n


def _params_to_json(params: SamplingParams) -> dict:
    return {
        "g": params.g,
        "temperature": params.temperature,
        "top_p": params.top_p,
        "seed": params.seed,
        "model_id": params.model_id,
    }


def _params_from_json(obj: dict) -> SamplingParams:
    return SamplingParams(
        g=int(obj["g"]),
        temperature=float(obj["temperature"]),
        top_p=float(obj["top_p"]),
        seed=obj.get("seed"),
        model_id=str(obj.get("model_id", "")),
    )


def write_verified(sets: Iterable[VerifiedResponseSet], path: str | Path) -> int:
    """Write verified response sets, one JSON object per line."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for vs in sets:
            obj = {
                "sample_id": vs.sample_id,
                "responses": list(vs.responses),
                "rewards": list(vs.rewards),
                "difficulty": vs.difficulty.value,
                "params": _params_to_json(vs.params),
            }
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")
            n += 1
    return n


def load_verified(path: str | Path) -> list[VerifiedResponseSet]:
    out: list[VerifiedResponseSet] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                out.append(
                    VerifiedResponseSet(
                        sample_id=str(obj["sample_id"]),
                        responses=tuple(obj["responses"]),
                        rewards=tuple(float(r) for r in obj["rewards"]),
                        difficulty=DifficultyLabel(obj["difficulty"]),
                        params=_params_from_json(obj["params"]),
                    )
                )
            except (json.JSONDecodeError, ValueError, KeyError) as exc:
                raise DatasetError(f"{path}:{lineno}: {exc}") from exc
    return out
