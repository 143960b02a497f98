"""Curated-subset experiments on the synthetic tasks.

One run: generate a task, warm up a fresh policy on a small held-out split,
probe every remaining train episode with g sampled responses to bucket it by
difficulty, apply the configured curation plan, train (SFT or GRPO), and log
ID/OOD accuracy and gradient norms per step.  An experiment repeats this
over n_seeds independently seeded runs per arm; all randomness fans out of
one master seed."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from .policy import SoftmaxPolicy, draw_class_rows, policy_probs_batch, evaluate, zero_policy
from .tasks import SyntheticTaskSpec, episodes_to_arrays, gen_task
from .train import PolicySnapshotPair, grpo_step, sft_grad, sft_step
from ..core import DifficultyLabel, SamplingParams, VerifiedResponseSet
from ..curator import BalanceMode, CurationPlan, CurationVariant, build_curated_set
from ..grpo import GrpoConfig
from ..seeding import derive_seed, make_rng


class ExperimentError(RuntimeError):
    """The configured experiment cannot run on the generated data."""


@dataclass(frozen=True, slots=True)
class LabConfig:
    """Everything one experiment needs: the task generator, the trainer, the
    curation plan, and the optimization schedule."""

    task: SyntheticTaskSpec = field(default_factory=SyntheticTaskSpec)
    trainer: str = "sft"
    variant: CurationVariant = CurationVariant.FULL
    # BUCKET_ONLY with no label expands to one arm per difficulty bucket.
    bucket_label: DifficultyLabel | None = None
    hard_ratios: tuple[float, ...] = ()
    balance: BalanceMode = BalanceMode.NONE
    g: int = 8
    sample_temperature: float = 0.9
    warmup_fraction: float = 0.05
    warmup_steps: int = 40
    warmup_lr: float = 0.5
    # Calibrated drift scale: large enough for curation effects to express,
    # small enough that no arm collapses away from the warmup anchor.
    lr: float = 0.0025
    # GRPO gradients run smaller than SFT ones at matched data, so the GRPO
    # arm gets its own calibrated rate; None falls back to lr.
    grpo_lr: float | None = 0.005
    steps: int = 200
    n_seeds: int = 20
    seed: int = 0
    grpo: GrpoConfig = field(default_factory=GrpoConfig)

    def __post_init__(self) -> None:
        if self.trainer not in ("sft", "grpo"):
            raise ValueError("trainer must be 'sft' or 'grpo'")
        if self.variant is CurationVariant.HARD_RATIO and not self.hard_ratios:
            raise ValueError("hard-ratio experiments need at least one ratio")
        if self.g < 2:
            raise ValueError("g must be >= 2")
        if self.sample_temperature <= 0:
            raise ValueError("sample_temperature must be > 0")
        if not (0.0 <= self.warmup_fraction < 1.0):
            raise ValueError("warmup_fraction must lie in [0, 1)")
        if self.warmup_steps < 0 or self.steps < 1 or self.n_seeds < 1:
            raise ValueError("warmup_steps >= 0, steps >= 1 and n_seeds >= 1 required")
        if self.lr <= 0 or self.warmup_lr <= 0:
            raise ValueError("learning rates must be > 0")
        if self.grpo_lr is not None and self.grpo_lr <= 0:
            raise ValueError("grpo_lr must be > 0 when set")

    @property
    def effective_grpo_lr(self) -> float:
        return self.lr if self.grpo_lr is None else self.grpo_lr


@dataclass(frozen=True, slots=True)
class _Arm:
    label: str
    trainer: str
    variant: CurationVariant
    bucket_label: DifficultyLabel | None = None
    rho: float | None = None


def _arms_of(config: LabConfig) -> list[_Arm]:
    if config.variant is CurationVariant.HARD_RATIO:
        return [
            _Arm(f"hard-ratio-{rho:g}", config.trainer, config.variant, rho=rho)
            for rho in config.hard_ratios
        ]
    if config.variant is CurationVariant.BUCKET_ONLY:
        labels = [config.bucket_label] if config.bucket_label else list(DifficultyLabel)
        return [
            _Arm(f"bucket-{lbl.value}", config.trainer, config.variant, bucket_label=lbl)
            for lbl in labels
        ]
    name = {
        CurationVariant.SFT_M: "sft-m",
        CurationVariant.SFT_EM: "sft-em",
        CurationVariant.FULL: "sft-full" if config.trainer == "sft" else "full",
    }[config.variant]
    label = "grpo" if config.trainer == "grpo" and config.variant is CurationVariant.FULL else (
        name if config.trainer == "sft" else f"grpo-{name}"
    )
    return [_Arm(label, config.trainer, config.variant)]


@dataclass(slots=True)
class TrainReport:
    """One run's telemetry.  Series are indexed by training step (1-based);
    bucket_grad_norms holds the per-difficulty SFT gradient norms measured on
    the full probed split at each step (empty for GRPO runs)."""

    arm: str
    run_index: int
    seed: int
    steps: list[int]
    id_acc: list[float]
    ood_acc: list[float]
    grad_norm: list[float]
    bucket_grad_norms: dict[str, list[float]]
    bucket_sizes: dict[str, int]
    train_size: int
    config_echo: dict

    def __post_init__(self) -> None:
        lengths = {len(self.steps), len(self.id_acc), len(self.ood_acc), len(self.grad_norm)}
        lengths |= {len(v) for v in self.bucket_grad_norms.values()}
        if len(lengths) != 1:
            raise ValueError("telemetry series must share one length")

    @property
    def final_id_acc(self) -> float:
        return self.id_acc[-1]

    @property
    def final_ood_acc(self) -> float:
        return self.ood_acc[-1]


def _plan_for(arm: _Arm, config: LabConfig, plan_seed: int) -> CurationPlan:
    return CurationPlan(
        variant=arm.variant,
        bucket_label=arm.bucket_label,
        hard_ratio=arm.rho,
        balance=config.balance,
        seed=plan_seed,
        target_size=None,
    )


def _config_echo(config: LabConfig, arm: _Arm, run_index: int) -> dict:
    return {
        "arm": arm.label,
        "trainer": arm.trainer,
        "variant": arm.variant.value,
        "bucket_label": None if arm.bucket_label is None else arm.bucket_label.value,
        "rho": arm.rho,
        "balance": config.balance.value,
        "g": config.g,
        "sample_temperature": config.sample_temperature,
        "warmup_fraction": config.warmup_fraction,
        "warmup_steps": config.warmup_steps,
        "warmup_lr": config.warmup_lr,
        "lr": config.lr,
        "grpo_lr": config.effective_grpo_lr,
        "steps": config.steps,
        "n_seeds": config.n_seeds,
        "master_seed": config.seed,
        "run_index": run_index,
        "grpo": {
            "g": config.grpo.g,
            "epsilon": config.grpo.epsilon,
            "beta": config.grpo.beta,
            "delta": config.grpo.delta,
            "sample_std": config.grpo.sample_std,
        },
        "task": {
            "d": config.task.d,
            "n_classes": config.task.n_classes,
            "n_train": config.task.n_train,
            "n_id_test": config.task.n_id_test,
            "n_ood_test": config.task.n_ood_test,
            "proto_scale": config.task.proto_scale,
            "noise_sigma": config.task.noise_sigma,
            "ood_rotation_angle": config.task.ood_rotation_angle,
            "label_noise_rate": config.task.label_noise_rate,
            "ambiguous_fraction": config.task.ambiguous_fraction,
            "ambiguous_depth": config.task.ambiguous_depth,
        },
    }


def run_single(config: LabConfig, arm: _Arm, run_index: int) -> TrainReport:
    run_seed = derive_seed(config.seed, "run", run_index)
    spec = replace(config.task, seed=run_seed)
    task = gen_task(spec)

    # Warm-up split: a small held-out slice initializes the probing policy
    # and is excluded from all subsequent training.
    n = len(task.train)
    n_warm = max(1, round(config.warmup_fraction * n)) if config.warmup_fraction > 0 else 0
    order = make_rng(run_seed, "warmup-split").permutation(n)
    warm_episodes = [task.train[i] for i in order[:n_warm]]
    main_episodes = [task.train[i] for i in sorted(order[n_warm:])]

    policy = zero_policy(spec.n_classes, spec.d, config.sample_temperature)
    if warm_episodes:
        warm_batch = episodes_to_arrays(warm_episodes)
        for _ in range(config.warmup_steps):
            policy, _ = sft_step(policy, warm_batch, config.warmup_lr)

    # Probe: g sampled responses per episode under the warmed policy decide
    # each episode's difficulty bucket.
    inputs, labels = episodes_to_arrays(main_episodes)
    probe_probs = policy_probs_batch(policy, inputs)
    uniforms = make_rng(run_seed, "probe").random((len(main_episodes), config.g))
    probe_classes = draw_class_rows(probe_probs, uniforms)
    rewards = (probe_classes == labels[:, None]).astype(np.float64)
    params = SamplingParams(
        g=config.g, temperature=config.sample_temperature, top_p=1.0, model_id="lab-policy"
    )
    verified = [
        VerifiedResponseSet.from_rewards(
            f"ep-{i:06d}", [str(int(c)) for c in probe_classes[i]], rewards[i], params
        )
        for i in range(len(main_episodes))
    ]

    plan = _plan_for(arm, config, plan_seed=run_seed)
    selected_ids, manifest = build_curated_set(verified, plan)
    if not selected_ids:
        raise ExperimentError(
            f"arm {arm.label!r}: curation selected no training episodes "
            f"(bucket counts {manifest.bucket_counts})"
        )
    selected = [int(sample_id[3:]) for sample_id in selected_ids]
    train_batch = (inputs[selected], labels[selected])

    ones = rewards.sum(axis=1).astype(np.int64)
    bucket_masks = {
        "easy": ones == config.g,
        "medium": (ones > 0) & (ones < config.g),
        "hard": ones == 0,
    }
    bucket_sizes = {name: int(mask.sum()) for name, mask in bucket_masks.items()}
    bucket_batches = {
        name: (inputs[mask], labels[mask]) for name, mask in bucket_masks.items() if mask.any()
    }

    steps: list[int] = []
    id_acc: list[float] = []
    ood_acc: list[float] = []
    grad_norm: list[float] = []
    bucket_norms: dict[str, list[float]] = (
        {name: [] for name in bucket_batches} if arm.trainer == "sft" else {}
    )

    pair = PolicySnapshotPair.fresh(policy) if arm.trainer == "grpo" else None
    for step in range(1, config.steps + 1):
        if arm.trainer == "sft":
            for name, batch in bucket_batches.items():
                bucket_norms[name].append(float(np.linalg.norm(sft_grad(policy, batch))))
            policy, gnorm = sft_step(policy, train_batch, config.lr)
        else:
            pair, gnorm, _ = grpo_step(
                pair,
                train_batch,
                config.grpo,
                config.effective_grpo_lr,
                derive_seed(run_seed, "grpo-step", step),
            )
            policy = pair.current
        steps.append(step)
        grad_norm.append(gnorm)
        id_acc.append(evaluate(policy, task.id_test))
        ood_acc.append(evaluate(policy, task.ood_test))

    return TrainReport(
        arm=arm.label,
        run_index=run_index,
        seed=run_seed,
        steps=steps,
        id_acc=id_acc,
        ood_acc=ood_acc,
        grad_norm=grad_norm,
        bucket_grad_norms=bucket_norms,
        bucket_sizes=bucket_sizes,
        train_size=len(selected),
        config_echo=_config_echo(config, arm, run_index),
    )


def run_experiment(config: LabConfig, out_dir: str | Path | None = None) -> dict[str, list[TrainReport]]:
    """Run every arm of the configured experiment across n_seeds runs.
    Returns reports keyed by arm label, in seed order; optionally writes one
    CSV per run plus a summary JSON under out_dir."""
    results: dict[str, list[TrainReport]] = {}
    for arm in _arms_of(config):
        results[arm.label] = [run_single(config, arm, i) for i in range(config.n_seeds)]
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for label, reports in results.items():
            for report in reports:
                write_report_csv(report, out / f"{label}-run{report.run_index:03d}.csv")
        with open(out / "summary.json", "w", encoding="utf-8") as fh:
            json.dump(summarize(results), fh, indent=2, sort_keys=True)
            fh.write("\n")
    return results


_CSV_COLUMNS = ["step", "id_acc", "ood_acc", "grad_norm", "norm_easy", "norm_medium", "norm_hard"]


def write_report_csv(report: TrainReport, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_COLUMNS)
        for i, step in enumerate(report.steps):
            row = [step, report.id_acc[i], report.ood_acc[i], report.grad_norm[i]]
            for name in ("easy", "medium", "hard"):
                series = report.bucket_grad_norms.get(name)
                row.append(series[i] if series else "")
            writer.writerow(row)


def _mean_std(values: Sequence[float]) -> dict[str, float]:
    arr = np.asarray(values, dtype=np.float64)
    return {"mean": float(arr.mean()), "std": float(arr.std())}


def summarize(results: dict[str, list[TrainReport]]) -> dict:
    """Cross-seed aggregates per arm: final accuracies, gradient norms, and
    bucket composition."""
    summary: dict = {}
    for label, reports in results.items():
        bucket_norm_means = {}
        for name in ("easy", "medium", "hard"):
            series = [r.bucket_grad_norms[name] for r in reports if name in r.bucket_grad_norms]
            if series:
                bucket_norm_means[name] = float(np.mean([np.mean(s) for s in series]))
        summary[label] = {
            "n_runs": len(reports),
            "train_size": _mean_std([r.train_size for r in reports]),
            "final_id_acc": _mean_std([r.final_id_acc for r in reports]),
            "final_ood_acc": _mean_std([r.final_ood_acc for r in reports]),
            "mean_grad_norm": float(np.mean([np.mean(r.grad_norm) for r in reports])),
            "bucket_grad_norm_means": bucket_norm_means,
            "bucket_sizes": {
                name: _mean_std([r.bucket_sizes[name] for r in reports])
                for name in ("easy", "medium", "hard")
            },
        }
    return summary


def sign_test(diffs: Sequence[float]) -> tuple[int, int, float]:
    """One-sided sign test for a positive median difference.  Returns
    (wins, informative_n, p_value); ties are dropped."""
    wins = sum(1 for d in diffs if d > 0)
    losses = sum(1 for d in diffs if d < 0)
    n = wins + losses
    if n == 0:
        return 0, 0, 1.0
    p = sum(math.comb(n, j) for j in range(wins, n + 1)) / 2.0**n
    return wins, n, float(p)


_TASK_KEYS = {
    "d",
    "n_classes",
    "n_train",
    "n_id_test",
    "n_ood_test",
    "proto_scale",
    "noise_sigma",
    "ood_rotation_angle",
    "label_noise_rate",
    "ambiguous_fraction",
    "ambiguous_depth",
    "seed",
}
_GRPO_KEYS = {"g", "epsilon", "beta", "delta", "sample_std"}
_CURATION_KEYS = {"variant", "bucket", "hard_ratios", "balance"}
_TOP_KEYS = {
    "task",
    "trainer",
    "curation",
    "g",
    "sample_temperature",
    "warmup_fraction",
    "warmup_steps",
    "warmup_lr",
    "lr",
    "grpo_lr",
    "steps",
    "n_seeds",
    "seed",
    "grpo",
}


def _checked(section: dict, allowed: set[str], where: str) -> dict:
    unknown = set(section) - allowed
    if unknown:
        raise ValueError(f"unknown {where} keys: {sorted(unknown)}")
    return section


def load_lab_config(path: str | Path) -> LabConfig:
    """Build a LabConfig from a YAML document; unknown keys are rejected so
    typos fail loudly."""
    with open(path, encoding="utf-8") as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: expected a mapping at the top level")
    _checked(raw, _TOP_KEYS, "config")

    task = SyntheticTaskSpec(**_checked(dict(raw.get("task", {})), _TASK_KEYS, "task"))
    grpo = GrpoConfig(**_checked(dict(raw.get("grpo", {})), _GRPO_KEYS, "grpo"))
    curation = _checked(dict(raw.get("curation", {})), _CURATION_KEYS, "curation")

    variant = CurationVariant(curation.get("variant", "full"))
    bucket_raw = curation.get("bucket")
    bucket_label = None if bucket_raw is None else DifficultyLabel(bucket_raw)
    hard_ratios = tuple(float(r) for r in curation.get("hard_ratios", ()))
    balance = BalanceMode(curation.get("balance", "none"))

    kwargs = {
        key: raw[key]
        for key in (
            "trainer",
            "g",
            "sample_temperature",
            "warmup_fraction",
            "warmup_steps",
            "warmup_lr",
            "lr",
            "grpo_lr",
            "steps",
            "n_seeds",
            "seed",
        )
        if key in raw
    }
    return LabConfig(
        task=task,
        grpo=grpo,
        variant=variant,
        bucket_label=bucket_label,
        hard_ratios=hard_ratios,
        balance=balance,
        **kwargs,
    )
