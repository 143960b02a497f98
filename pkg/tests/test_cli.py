"""End-to-end CLI tests: every subcommand, exit-code conventions, output
reproducibility, and the run log."""

from __future__ import annotations

import json
from pathlib import Path

import pytest
import yaml
from click.testing import CliRunner

from diffsift.cli import main
from diffsift.dataset_io import load_verified, write_dataset, write_verified
from diffsift.mock_endpoint import MockEndpoint, make_fixture

from .helpers import make_verified_mix


@pytest.fixture
def runner() -> CliRunner:
    return CliRunner()


def invoke(runner: CliRunner, log: Path, *args: str, env: dict | None = None):
    return runner.invoke(main, ["--run-log", str(log), *args], env=env, catch_exceptions=False)


def read_log(log: Path) -> list[dict]:
    if not log.exists():
        return []
    return [json.loads(line) for line in log.read_text().splitlines()]


class TestAdvantage:
    def test_mixed_group(self, runner: CliRunner, tmp_path: Path) -> None:
        log = tmp_path / "runs.jsonl"
        result = invoke(runner, log, "advantage", "--rewards", "1,1,0,0,0,0,0,0")
        assert result.exit_code == 0
        assert "mean: 0.25" in result.output
        assert "zero-update group: False" in result.output
        assert "advantages:" in result.output
        records = read_log(log)
        assert len(records) == 1
        assert records[0]["subcommand"] == "advantage"
        assert records[0]["config"]["rewards"] == [1.0, 1.0] + [0.0] * 6

    def test_uniform_group_is_zero_update(self, runner: CliRunner, tmp_path: Path) -> None:
        result = invoke(runner, tmp_path / "runs.jsonl", "advantage", "--rewards", "1,1,1,1")
        assert result.exit_code == 0
        assert "advantages: [0.0, 0.0, 0.0, 0.0]" in result.output
        assert "zero-update group: True" in result.output

    def test_unparseable_rewards_is_usage_error(self, runner: CliRunner, tmp_path: Path) -> None:
        result = runner.invoke(main, ["--run-log", str(tmp_path / "r.jsonl"), "advantage", "--rewards", "a,b"])
        assert result.exit_code == 2
        assert "unparseable" in result.output

    def test_single_reward_is_usage_error(self, runner: CliRunner, tmp_path: Path) -> None:
        result = runner.invoke(main, ["--run-log", str(tmp_path / "r.jsonl"), "advantage", "--rewards", "1"])
        assert result.exit_code == 2
        assert "at least 2" in result.output


class TestStats:
    def test_histogram_and_examples(self, runner: CliRunner, tmp_path: Path) -> None:
        verified_path = tmp_path / "verified.jsonl"
        write_verified(make_verified_mix(2, 3, 1), verified_path)
        log = tmp_path / "runs.jsonl"
        result = invoke(runner, log, "stats", "--responses", str(verified_path))
        assert result.exit_code == 0
        assert "difficulty histogram (6 samples):" in result.output
        assert "easy: 2" in result.output
        assert "medium: 3" in result.output
        assert "hard: 1" in result.output
        assert "example easy:" in result.output
        assert read_log(log)[0]["input_digests"]["responses"]

    def test_missing_file_is_usage_error(self, runner: CliRunner, tmp_path: Path) -> None:
        result = runner.invoke(
            main, ["--run-log", str(tmp_path / "r.jsonl"), "stats", "--responses", str(tmp_path / "nope.jsonl")]
        )
        assert result.exit_code == 2

    def test_malformed_file_is_runtime_error(self, runner: CliRunner, tmp_path: Path) -> None:
        bad = tmp_path / "bad.jsonl"
        bad.write_text("not json\n")
        result = runner.invoke(
            main, ["--run-log", str(tmp_path / "r.jsonl"), "stats", "--responses", str(bad)]
        )
        assert result.exit_code == 1


class TestSample:
    def test_end_to_end_with_cache(self, runner: CliRunner, tmp_path: Path) -> None:
        samples, script, expected = make_fixture(n_samples=12, g=4)
        data = tmp_path / "data.jsonl"
        write_dataset(samples, data)
        out = tmp_path / "verified.jsonl"
        cache = tmp_path / "cache.jsonl"
        log = tmp_path / "runs.jsonl"
        with MockEndpoint(script) as mock:
            args = [
                "sample",
                "--data", str(data),
                "--base-url", mock.base_url,
                "--g", "4",
                "--seed", "3",
                "--cache", str(cache),
                "--out", str(out),
            ]
            first = invoke(runner, log, *args)
            assert first.exit_code == 0
            assert mock.request_count == 12
            assert "wrote 12 response sets" in first.output
            assert "(0 from cache)" in first.output
            mock.reset_counters()
            second = invoke(runner, log, *args)
            assert second.exit_code == 0
            assert mock.request_count == 0
            assert "(12 from cache)" in second.output
        verified = load_verified(out)
        assert len(verified) == 12
        histogram = {"easy": 0, "medium": 0, "hard": 0}
        for v in verified:
            histogram[v.difficulty.value] += 1
        assert histogram == expected
        records = read_log(log)
        assert [r["subcommand"] for r in records] == ["sample", "sample"]
        assert records[0]["output_paths"] == [str(out), str(cache)]

    def test_failed_sample_exits_nonzero_but_writes_rest(self, runner: CliRunner, tmp_path: Path) -> None:
        samples, script, _ = make_fixture(n_samples=5, g=4)
        script[samples[2].prompt].always_fail = True
        data = tmp_path / "data.jsonl"
        write_dataset(samples, data)
        out = tmp_path / "verified.jsonl"
        with MockEndpoint(script) as mock:
            result = runner.invoke(
                main,
                [
                    "--run-log", str(tmp_path / "runs.jsonl"),
                    "sample",
                    "--data", str(data),
                    "--base-url", mock.base_url,
                    "--g", "4",
                    "--max-retries", "1",
                    "--cache", str(tmp_path / "c.jsonl"),
                    "--out", str(out),
                ],
            )
        assert result.exit_code == 1
        assert "fx-002" in result.output
        assert "1 of 5 samples failed" in result.output
        assert len(load_verified(out)) == 4

    def test_auth_rejection_exits_nonzero(self, runner: CliRunner, tmp_path: Path) -> None:
        samples, script, _ = make_fixture(n_samples=3, g=4)
        data = tmp_path / "data.jsonl"
        write_dataset(samples, data)
        with MockEndpoint(script, api_key="secret") as mock:
            result = runner.invoke(
                main,
                [
                    "--run-log", str(tmp_path / "runs.jsonl"),
                    "sample",
                    "--data", str(data),
                    "--base-url", mock.base_url,
                    "--g", "4",
                    "--cache", str(tmp_path / "c.jsonl"),
                    "--out", str(tmp_path / "v.jsonl"),
                ],
                env={"DIFFSIFT_API_KEY": "wrong"},
            )
        assert result.exit_code == 1
        assert "credentials" in result.output

    def test_api_key_env_accepted(self, runner: CliRunner, tmp_path: Path) -> None:
        samples, script, _ = make_fixture(n_samples=3, g=4)
        data = tmp_path / "data.jsonl"
        write_dataset(samples, data)
        with MockEndpoint(script, api_key="secret") as mock:
            result = runner.invoke(
                main,
                [
                    "--run-log", str(tmp_path / "runs.jsonl"),
                    "sample",
                    "--data", str(data),
                    "--base-url", mock.base_url,
                    "--g", "4",
                    "--cache", str(tmp_path / "c.jsonl"),
                    "--out", str(tmp_path / "v.jsonl"),
                ],
                env={"DIFFSIFT_API_KEY": "secret"},
            )
        assert result.exit_code == 0


class TestCurate:
    @pytest.fixture
    def corpus(self, tmp_path: Path) -> dict[str, Path]:
        samples, script, _ = make_fixture(n_samples=20, g=4)
        data = tmp_path / "data.jsonl"
        write_dataset(samples, data)
        verified = tmp_path / "verified.jsonl"
        runner = CliRunner()
        with MockEndpoint(script) as mock:
            result = runner.invoke(
                main,
                [
                    "--run-log", str(tmp_path / "seed-runs.jsonl"),
                    "sample",
                    "--data", str(data),
                    "--base-url", mock.base_url,
                    "--g", "4",
                    "--cache", str(tmp_path / "cache.jsonl"),
                    "--out", str(verified),
                ],
            )
            assert result.exit_code == 0
        return {"data": data, "verified": verified}

    def test_sft_em_outputs_reproducible(self, runner: CliRunner, tmp_path: Path, corpus) -> None:
        out = tmp_path / "curated.jsonl"
        log = tmp_path / "runs.jsonl"
        args = [
            "curate",
            "--responses", str(corpus["verified"]),
            "--data", str(corpus["data"]),
            "--variant", "sft-em",
            "--seed", "5",
            "--out", str(out),
        ]
        first = invoke(runner, log, *args)
        assert first.exit_code == 0
        assert "emitted" in first.output
        manifest_path = Path(f"{out}.manifest.json")
        assert manifest_path.exists()
        out_bytes = out.read_bytes()
        manifest_bytes = manifest_path.read_bytes()
        second = invoke(runner, log, *args)
        assert second.exit_code == 0
        assert out.read_bytes() == out_bytes
        assert manifest_path.read_bytes() == manifest_bytes
        rows = [json.loads(line) for line in out.read_text().splitlines()]
        assert all(r["messages"][-1]["role"] == "assistant" for r in rows)
        manifest = json.loads(manifest_bytes)
        assert manifest["plan"]["variant"] == "sft-em"
        assert manifest["emitted_count"] == len(rows)
        records = read_log(log)
        assert records[0]["output_paths"] == [str(out), str(manifest_path)]

    def test_hard_ratio_reports_achieved(self, runner: CliRunner, tmp_path: Path, corpus) -> None:
        out = tmp_path / "mixed.jsonl"
        result = invoke(
            runner,
            tmp_path / "runs.jsonl",
            "curate",
            "--responses", str(corpus["verified"]),
            "--data", str(corpus["data"]),
            "--variant", "hard-ratio",
            "--rho", "0.2",
            "--out", str(out),
        )
        assert result.exit_code == 0
        assert "achieved hard ratio" in result.output

    def test_bucket_without_label_is_runtime_error(self, runner: CliRunner, tmp_path: Path, corpus) -> None:
        result = runner.invoke(
            main,
            [
                "--run-log", str(tmp_path / "runs.jsonl"),
                "curate",
                "--responses", str(corpus["verified"]),
                "--data", str(corpus["data"]),
                "--variant", "bucket",
                "--out", str(tmp_path / "x.jsonl"),
            ],
        )
        assert result.exit_code == 1
        assert "bucket_label" in result.output

    def test_bad_variant_is_usage_error(self, runner: CliRunner, tmp_path: Path, corpus) -> None:
        result = runner.invoke(
            main,
            [
                "--run-log", str(tmp_path / "runs.jsonl"),
                "curate",
                "--responses", str(corpus["verified"]),
                "--data", str(corpus["data"]),
                "--variant", "everything",
            ],
        )
        assert result.exit_code == 2


class TestLab:
    def _write_config(self, path: Path, **curation) -> None:
        doc = {
            "trainer": "sft",
            "g": 4,
            "warmup_steps": 5,
            "steps": 3,
            "n_seeds": 1,
            "seed": 2,
            "task": {"d": 5, "n_classes": 4, "n_train": 200, "n_id_test": 80, "n_ood_test": 80},
            "grpo": {"g": 4},
            "curation": curation or {"variant": "sft-em"},
        }
        path.write_text(yaml.safe_dump(doc))

    def test_runs_and_writes_reports(self, runner: CliRunner, tmp_path: Path) -> None:
        config = tmp_path / "lab.yaml"
        self._write_config(config)
        out_dir = tmp_path / "lab-out"
        log = tmp_path / "runs.jsonl"
        result = invoke(runner, log, "lab", "--config", str(config), "--out", str(out_dir))
        assert result.exit_code == 0
        assert "sft-em: id" in result.output
        assert "train size" in result.output
        assert (out_dir / "sft-em-run000.csv").exists()
        assert (out_dir / "summary.json").exists()
        record = read_log(log)[0]
        assert record["subcommand"] == "lab"
        assert str(out_dir / "summary.json") in record["output_paths"]

    def test_seed_override_changes_results(self, runner: CliRunner, tmp_path: Path) -> None:
        config = tmp_path / "lab.yaml"
        self._write_config(config)
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        log = tmp_path / "runs.jsonl"
        assert invoke(runner, log, "lab", "--config", str(config), "--out", str(out_a)).exit_code == 0
        assert invoke(
            runner, log, "lab", "--config", str(config), "--out", str(out_b), "--seed", "77"
        ).exit_code == 0
        assert (out_a / "summary.json").read_bytes() != (out_b / "summary.json").read_bytes()

    def test_sweep_requires_ratios(self, runner: CliRunner, tmp_path: Path) -> None:
        config = tmp_path / "lab.yaml"
        self._write_config(config)
        result = runner.invoke(
            main,
            ["--run-log", str(tmp_path / "r.jsonl"), "lab", "--config", str(config), "--sweep"],
        )
        assert result.exit_code == 1
        assert "hard_ratios" in result.output

    def test_sweep_forces_hard_ratio_arms(self, runner: CliRunner, tmp_path: Path) -> None:
        config = tmp_path / "lab.yaml"
        self._write_config(config, variant="sft-em", hard_ratios=[0.0, 0.2])
        out_dir = tmp_path / "sweep-out"
        result = invoke(
            runner, tmp_path / "r.jsonl", "lab", "--config", str(config), "--out", str(out_dir), "--sweep"
        )
        assert result.exit_code == 0
        assert "hard-ratio-0:" in result.output
        assert "hard-ratio-0.2:" in result.output

    def test_unknown_config_key_is_runtime_error(self, runner: CliRunner, tmp_path: Path) -> None:
        config = tmp_path / "lab.yaml"
        config.write_text(yaml.safe_dump({"stepz": 3}))
        result = runner.invoke(
            main, ["--run-log", str(tmp_path / "r.jsonl"), "lab", "--config", str(config)]
        )
        assert result.exit_code == 1
        assert "unknown config keys" in result.output


def test_unknown_option_is_usage_error(runner: CliRunner, tmp_path: Path) -> None:
    result = runner.invoke(main, ["advantage", "--rewardz", "1,0"])
    assert result.exit_code == 2


def test_version_flag(runner: CliRunner) -> None:
    result = runner.invoke(main, ["--version"])
    assert result.exit_code == 0
    assert "diffsift" in result.output
