"""Command-line front end: sample responses, inspect difficulty, curate
datasets, compute advantages, and run lab experiments.

Every invocation appends one RunRecord (resolved config, input digests,
output paths, duration) to a JSONL run log, keeping the primary outputs free
of timestamps so identical inputs reproduce them byte for byte.  Exit codes:
0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from pathlib import Path

import click

from . import __version__
from .core import DifficultyLabel, SamplingParams
from .curator import (
    BalanceMode,
    CurationError,
    CurationPlan,
    CurationVariant,
    build_curated_set,
    difficulty_histogram,
    emit_sft_dataset,
    write_manifest,
)
from .dataset_io import DatasetError, load_dataset, load_verified, write_verified
from .grpo import DEFAULT_DELTA, RewardGroup, is_zero_update_group
from .lab.experiment import ExperimentError, load_lab_config, run_experiment, summarize
from .sampler import AuthError, EndpointConfig, ResponseCache, collect_responses, verify_batch

API_KEY_ENV = "DIFFSIFT_API_KEY"

_RUNTIME_ERRORS = (
    AuthError,
    CurationError,
    DatasetError,
    ExperimentError,
    OSError,
    ValueError,
)


def _digest_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _append_run_record(
    run_log: str,
    subcommand: str,
    config: dict,
    input_digests: dict[str, str],
    output_paths: list[str],
    started: float,
) -> None:
    record = {
        "subcommand": subcommand,
        "config": config,
        "input_digests": input_digests,
        "output_paths": output_paths,
        "duration_s": round(time.monotonic() - started, 6),
        "tool_version": __version__,
    }
    with open(run_log, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def _echo_histogram(counts: dict[str, int]) -> None:
    total = sum(counts.values())
    click.echo(f"difficulty histogram ({total} samples):")
    for name in ("easy", "medium", "hard"):
        click.echo(f"  {name:>6}: {counts.get(name, 0)}")


@click.group()
@click.version_option(version=__version__, prog_name="diffsift")
@click.option(
    "--run-log",
    default="diffsift-runs.jsonl",
    show_default=True,
    help="JSONL file that receives one record per invocation.",
)
@click.pass_context
def main(ctx: click.Context, run_log: str) -> None:
    """Difficulty-based dataset curation and a desk-scale training lab."""
    ctx.ensure_object(dict)
    ctx.obj["run_log"] = run_log


@main.command()
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False), help="Input dataset JSONL.")
@click.option("--base-url", required=True, help="OpenAI-compatible endpoint base URL (up to /v1).")
@click.option("--model", default="", help="Model id sent with each request.")
@click.option("--g", default=8, show_default=True, help="Responses sampled per prompt.")
@click.option("--temperature", default=0.9, show_default=True)
@click.option("--top-p", default=1.0, show_default=True)
@click.option("--seed", default=None, type=int, help="Base sampling seed sent to the endpoint.")
@click.option("--cache", default="responses-cache.jsonl", show_default=True, help="Append-only response cache.")
@click.option("--out", default="verified.jsonl", show_default=True, help="Verified response sets output.")
@click.option("--max-in-flight", default=8, show_default=True)
@click.option("--timeout", default=60.0, show_default=True, help="Per-request timeout in seconds.")
@click.option("--max-retries", default=3, show_default=True)
@click.option(
    "--supports-n/--no-supports-n",
    default=True,
    show_default=True,
    help="Whether the endpoint honors n=g; otherwise g single requests with incremented seeds.",
)
@click.pass_context
def sample(
    ctx: click.Context,
    data: str,
    base_url: str,
    model: str,
    g: int,
    temperature: float,
    top_p: float,
    seed: int | None,
    cache: str,
    out: str,
    max_in_flight: int,
    timeout: float,
    max_retries: int,
    supports_n: bool,
) -> None:
    """Sample g responses per prompt, verify them, and write response sets."""
    started = time.monotonic()
    try:
        samples = load_dataset(data)
        params = SamplingParams(g=g, temperature=temperature, top_p=top_p, seed=seed, model_id=model)
        endpoint = EndpointConfig(
            base_url=base_url,
            api_key=os.environ.get(API_KEY_ENV),
            max_in_flight=max_in_flight,
            request_timeout=timeout,
            max_retries=max_retries,
            supports_n=supports_n,
        )
        response_sets = collect_responses(samples, params, endpoint, ResponseCache(cache))
        failed = [r for r in response_sets if not r.ok]
        succeeded = [r for r in response_sets if r.ok]
        ok_ids = {r.sample_id for r in succeeded}
        verified = verify_batch(succeeded, [s for s in samples if s.id in ok_ids], params)
        write_verified(verified, out)
        _echo_histogram(difficulty_histogram(verified))
        click.echo(f"wrote {len(verified)} response sets to {out} ({sum(r.from_cache for r in succeeded)} from cache)")
        _append_run_record(
            ctx.obj["run_log"],
            "sample",
            {
                "data": data,
                "base_url": base_url,
                "model": model,
                "g": g,
                "temperature": temperature,
                "top_p": top_p,
                "seed": seed,
                "max_in_flight": max_in_flight,
                "timeout": timeout,
                "max_retries": max_retries,
                "supports_n": supports_n,
            },
            {"data": _digest_file(data)},
            [out, cache],
            started,
        )
        if failed:
            for r in failed:
                click.echo(f"error: sample {r.sample_id}: {r.error}", err=True)
            raise click.ClickException(f"{len(failed)} of {len(samples)} samples failed")
    except _RUNTIME_ERRORS as exc:
        raise click.ClickException(str(exc)) from exc


@main.command()
@click.option("--responses", required=True, type=click.Path(exists=True, dir_okay=False), help="Verified response sets JSONL.")
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False), help="Dataset JSONL the ids resolve against.")
@click.option(
    "--variant",
    type=click.Choice([v.value for v in CurationVariant]),
    default=CurationVariant.SFT_EM.value,
    show_default=True,
)
@click.option("--bucket", type=click.Choice([d.value for d in DifficultyLabel]), default=None, help="Bucket for --variant bucket.")
@click.option("--rho", type=float, default=None, help="Hard fraction for --variant hard-ratio.")
@click.option(
    "--balance",
    type=click.Choice([b.value for b in BalanceMode]),
    default=BalanceMode.NONE.value,
    show_default=True,
)
@click.option("--seed", default=0, show_default=True)
@click.option("--target-size", type=int, default=None, help="Subsample the selection to this many samples.")
@click.option("--out", default="curated.jsonl", show_default=True)
@click.option("--manifest", "manifest_path", default=None, help="Manifest path [default: <out>.manifest.json].")
@click.pass_context
def curate(
    ctx: click.Context,
    responses: str,
    data: str,
    variant: str,
    bucket: str | None,
    rho: float | None,
    balance: str,
    seed: int,
    target_size: int | None,
    out: str,
    manifest_path: str | None,
) -> None:
    """Select sample ids by difficulty and emit a chat-format SFT dataset."""
    started = time.monotonic()
    manifest_path = manifest_path or f"{out}.manifest.json"
    try:
        verified = load_verified(responses)
        samples = load_dataset(data)
        plan = CurationPlan(
            variant=CurationVariant(variant),
            bucket_label=None if bucket is None else DifficultyLabel(bucket),
            hard_ratio=rho,
            balance=BalanceMode(balance),
            seed=seed,
            target_size=target_size,
        )
        ids, manifest = build_curated_set(verified, plan)
        emit_sft_dataset(ids, samples, out)
        write_manifest(manifest, manifest_path)
        _echo_histogram(manifest.bucket_counts)
        achieved = manifest.achieved_hard_ratio
        click.echo(
            f"emitted {manifest.emitted_count} samples to {out}"
            + (f" (achieved hard ratio {achieved:.4f})" if achieved is not None else "")
        )
        _append_run_record(
            ctx.obj["run_log"],
            "curate",
            plan.to_json(),
            {"responses": _digest_file(responses), "data": _digest_file(data)},
            [out, manifest_path],
            started,
        )
    except _RUNTIME_ERRORS as exc:
        raise click.ClickException(str(exc)) from exc


@main.command()
@click.option("--responses", required=True, type=click.Path(exists=True, dir_okay=False), help="Verified response sets JSONL.")
@click.pass_context
def stats(ctx: click.Context, responses: str) -> None:
    """Print the difficulty histogram and one example per bucket."""
    started = time.monotonic()
    try:
        verified = load_verified(responses)
        _echo_histogram(difficulty_histogram(verified))
        examples: dict[DifficultyLabel, str] = {}
        for v in verified:
            examples.setdefault(v.difficulty, v.sample_id)
        for label in DifficultyLabel:
            if label in examples:
                click.echo(f"example {label.value}: {examples[label]}")
        _append_run_record(
            ctx.obj["run_log"],
            "stats",
            {"responses": responses},
            {"responses": _digest_file(responses)},
            [],
            started,
        )
    except _RUNTIME_ERRORS as exc:
        raise click.ClickException(str(exc)) from exc


@main.command()
@click.option("--rewards", required=True, help="Comma-separated group rewards, e.g. 1,1,0,0,0,0,0,0.")
@click.option("--delta", default=DEFAULT_DELTA, show_default=True, help="Std stabilizer.")
@click.pass_context
def advantage(ctx: click.Context, rewards: str, delta: float) -> None:
    """Print the group-normalized advantages for one reward group."""
    started = time.monotonic()
    try:
        values = [float(tok) for tok in rewards.split(",") if tok.strip() != ""]
    except ValueError as exc:
        raise click.BadParameter(f"unparseable --rewards: {exc}", param_hint="--rewards") from exc
    if len(values) < 2:
        raise click.BadParameter("need at least 2 rewards", param_hint="--rewards")
    try:
        group = RewardGroup.from_rewards(values, delta)
    except ValueError as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(f"rewards: {list(group.rewards)}")
    click.echo(f"mean: {group.mean!r}")
    click.echo(f"std (population): {group.std!r}")
    click.echo(f"advantages: {[round(a, 6) for a in group.advantages]}")
    click.echo(f"zero-update group: {is_zero_update_group(group.rewards)}")
    _append_run_record(
        ctx.obj["run_log"], "advantage", {"rewards": values, "delta": delta}, {}, [], started
    )


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False), help="Experiment YAML.")
@click.option("--out", default="lab-out", show_default=True, help="Directory for CSV reports and summary.json.")
@click.option("--sweep", is_flag=True, help="Force the hard-ratio sweep over the config's hard_ratios.")
@click.option("--seed", type=int, default=None, help="Override the config's master seed.")
@click.pass_context
def lab(ctx: click.Context, config_path: str, out: str, sweep: bool, seed: int | None) -> None:
    """Run the configured micro-lab experiment and write per-run CSV reports."""
    import dataclasses

    started = time.monotonic()
    try:
        config = load_lab_config(config_path)
        if sweep:
            if not config.hard_ratios:
                raise click.ClickException("--sweep requires hard_ratios in the config")
            config = dataclasses.replace(config, variant=CurationVariant.HARD_RATIO)
        if seed is not None:
            config = dataclasses.replace(config, seed=seed)
        results = run_experiment(config, out_dir=out)
        summary = summarize(results)
        for arm in sorted(summary):
            stats_ = summary[arm]
            click.echo(
                f"{arm}: id {stats_['final_id_acc']['mean']:.4f} "
                f"ood {stats_['final_ood_acc']['mean']:.4f} "
                f"(n={stats_['n_runs']}, train size {stats_['train_size']['mean']:.0f})"
            )
        outputs = sorted(str(p) for p in Path(out).glob("*.csv")) + [str(Path(out) / "summary.json")]
        _append_run_record(
            ctx.obj["run_log"],
            "lab",
            {"config": config_path, "sweep": sweep, "seed": seed},
            {"config": _digest_file(config_path)},
            outputs,
            started,
        )
    except _RUNTIME_ERRORS as exc:
        raise click.ClickException(str(exc)) from exc


if __name__ == "__main__":
    main()
