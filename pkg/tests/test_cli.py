import json
from io import StringIO
from pathlib import Path

import numpy as np
import pytest
from rich.console import Console

from cli.console import Reporter
from cli.main import (
    EXIT_CHECKPOINT,
    EXIT_CONFIG,
    EXIT_METRICS,
    EXIT_MISSING_FILE,
    EXIT_OK,
    EXIT_USAGE,
    checkpoint_paths,
    main,
    moving_average,
)
from harness.artifacts import read_csv
from tinynn.checkpoint import load_params
from world.config import ConfigError


DESK = Path(__file__).resolve().parent.parent / "configs" / "desk.cfg"

TINY_CONFIG = """\
n_robots = 4
n_tasks = 2
alpha_max = 2
max_steps = 20
batch_size = 8
hidden_dims = 16
buffer_capacity = 200
episodes = 2
policies = lia_maddpg, lia_maddpg_no_improve, greedy
"""


@pytest.fixture
def captured():
    out, err = StringIO(), StringIO()
    reporter = Reporter(console=Console(file=out, width=200), err_console=Console(file=err, width=200))
    return reporter, out, err


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY_CONFIG)
    return path


def run_cli(argv, reporter):
    return main([str(a) for a in argv], reporter=reporter)


class TestGenScenarios:
    def test_manifest_is_reproducible(self, tmp_path, captured):
        reporter, _, _ = captured
        for name in ("a", "b"):
            code = run_cli(["gen-scenarios", "--count", 100, "--seed", 7, "--out", tmp_path / name], reporter)
            assert code == EXIT_OK
        first = (tmp_path / "a" / "scenarios.json").read_bytes()
        assert first == (tmp_path / "b" / "scenarios.json").read_bytes()
        assert len(json.loads(first)["scenarios"]) == 100


class TestFailures:
    def test_missing_checkpoint_names_the_path(self, tmp_path, tiny_config, captured):
        reporter, _, err = captured
        missing = tmp_path / "nowhere" / "actor.tnn"
        code = run_cli(
            ["eval", "--config", tiny_config, "--checkpoint", missing, "--count", 2, "--out", tmp_path / "e"],
            reporter,
        )
        assert code == EXIT_MISSING_FILE
        assert "actor.tnn" in err.getvalue()
        assert "ERROR" in err.getvalue()

    def test_learned_policy_without_checkpoint(self, tmp_path, tiny_config, captured):
        reporter, _, _ = captured
        code = run_cli(["eval", "--config", tiny_config, "--count", 2, "--out", tmp_path / "e"], reporter)
        assert code == EXIT_METRICS

    def test_unknown_flag(self, captured, capsys):
        reporter, _, _ = captured
        assert run_cli(["eval", "--bogus"], reporter) == EXIT_USAGE

    def test_unknown_config_key(self, tmp_path, captured):
        reporter, _, err = captured
        path = tmp_path / "bad.cfg"
        path.write_text("n_robots = 4\nwarp_drive = on\n")
        code = run_cli(["gen-scenarios", "--config", path, "--out", tmp_path / "g"], reporter)
        assert code == EXIT_CONFIG
        assert "warp_drive" in err.getvalue()

    def test_corrupt_checkpoint(self, tmp_path, tiny_config, captured):
        reporter, _, _ = captured
        bad = tmp_path / "actor.tnn"
        bad.write_bytes(b"TNNP" + bytes(40))
        code = run_cli(
            ["eval", "--config", tiny_config, "--checkpoint", bad, "--count", 2, "--out", tmp_path / "e"],
            reporter,
        )
        assert code == EXIT_CHECKPOINT

    def test_unknown_policy_name(self, tmp_path, tiny_config, captured):
        reporter, _, _ = captured
        code = run_cli(
            ["eval", "--config", tiny_config, "--policies", "oracle", "--count", 2, "--out", tmp_path / "e"],
            reporter,
        )
        assert code == EXIT_CONFIG


class TestTrainEvalReplay:
    def test_zero_episode_training(self, tmp_path, tiny_config, captured):
        reporter, _, _ = captured
        out = tmp_path / "train"
        code = run_cli(["train", "--config", tiny_config, "--episodes", 0, "--out", out], reporter)
        assert code == EXIT_OK
        actor = load_params(out / "actor.tnn")
        assert actor.version == 0
        assert (out / "training_curve.csv").read_text().splitlines() == [
            "episode,mean_utility,normalized_utility,critic_loss,epsilon,wall_ms"
        ]

    def test_train_then_eval(self, tmp_path, tiny_config, captured):
        reporter, out_text, _ = captured
        train_dir, eval_dir = tmp_path / "train", tmp_path / "eval"
        assert run_cli(["train", "--config", tiny_config, "--out", train_dir], reporter) == EXIT_OK
        curve = read_csv(train_dir / "training_curve.csv")
        assert [row["episode"] for row in curve] == ["0", "1"]
        assert {row["wall_ms"] for row in curve} == {"0.0"}

        code = run_cli(
            [
                "eval",
                "--config",
                tiny_config,
                "--checkpoint",
                train_dir / "actor.tnn",
                "--count",
                3,
                "--out",
                eval_dir,
            ],
            reporter,
        )
        assert code == EXIT_OK
        rows = read_csv(eval_dir / "metrics.csv")
        assert len(rows) == 9
        assert list(rows[0]) == ["scenario_id", "policy", "total_utility", "natu_raw", "natu", "natc", "winner"]
        assert (eval_dir / "summary.txt").read_text().startswith("policy natu_mean")
        assert "Evaluation summary" in out_text.getvalue()

    def test_named_checkpoints(self, tmp_path, tiny_config, captured):
        reporter, _, _ = captured
        lia_dir, plain_dir, eval_dir = tmp_path / "lia", tmp_path / "plain", tmp_path / "eval"
        assert run_cli(["train", "--config", tiny_config, "--out", lia_dir], reporter) == EXIT_OK
        assert run_cli(["train", "--config", tiny_config, "--episodes", 0, "--out", plain_dir], reporter) == EXIT_OK

        code = run_cli(
            [
                "eval",
                "--config",
                tiny_config,
                "--policies",
                "lia_maddpg, greedy",
                "--checkpoint",
                f"lia={lia_dir / 'actor.tnn'}",
                "--checkpoint",
                f"no_lia={plain_dir / 'actor.tnn'}",
                "--count",
                2,
                "--out",
                eval_dir,
            ],
            reporter,
        )
        assert code == EXIT_OK
        policies = [row["policy"] for row in read_csv(eval_dir / "metrics.csv")]
        assert policies == ["lia_maddpg@lia", "lia_maddpg@no_lia", "greedy"] * 2

    def test_duplicate_checkpoint_tag(self, tmp_path, tiny_config, captured):
        reporter, _, err = captured
        argv = ["eval", "--config", tiny_config, "--checkpoint", "a=x.tnn", "--checkpoint", "a=y.tnn", "--out", tmp_path]
        assert run_cli(argv, reporter) == EXIT_CONFIG
        assert "given twice" in err.getvalue()

    def test_greedy_eval_without_checkpoint(self, tmp_path, tiny_config, captured):
        reporter, _, _ = captured
        out = tmp_path / "eval"
        code = run_cli(
            ["eval", "--config", tiny_config, "--policies", "greedy", "--count", 4, "--out", out],
            reporter,
        )
        assert code == EXIT_OK
        rows = read_csv(out / "metrics.csv")
        assert [row["policy"] for row in rows] == ["greedy"] * 4
        assert all(row["winner"] == "1" for row in rows)

    def test_eval_from_manifest(self, tmp_path, tiny_config, captured):
        reporter, _, _ = captured
        run_cli(["gen-scenarios", "--config", tiny_config, "--count", 2, "--out", tmp_path], reporter)
        code = run_cli(
            [
                "eval",
                "--config",
                tiny_config,
                "--policies",
                "greedy",
                "--scenarios",
                tmp_path / "scenarios.json",
                "--out",
                tmp_path / "eval",
            ],
            reporter,
        )
        assert code == EXIT_OK
        assert len(read_csv(tmp_path / "eval" / "metrics.csv")) == 2

    def test_replay_trace(self, tmp_path, tiny_config, captured):
        reporter, _, _ = captured
        out = tmp_path / "replay"
        code = run_cli(["replay", "--config", tiny_config, "--scenario-id", 1, "--out", out], reporter)
        assert code == EXIT_OK
        records = [json.loads(line) for line in (out / "trace.jsonl").read_text().splitlines()]
        assert records[0]["event"] == "init"
        assert len(records) == records[-1]["t"] + 1
        assert records[-1]["done"] is True

    def test_replay_unknown_scenario(self, tmp_path, tiny_config, captured):
        reporter, _, _ = captured
        run_cli(["gen-scenarios", "--config", tiny_config, "--count", 1, "--out", tmp_path], reporter)
        code = run_cli(
            ["replay", "--scenarios", tmp_path / "scenarios.json", "--scenario-id", 5, "--out", tmp_path / "r"],
            reporter,
        )
        assert code == EXIT_CONFIG


class TestPlotData:
    def test_moving_average(self):
        np.testing.assert_allclose(moving_average(np.array([1.0, 2.0, 3.0, 4.0]), 2), [1.0, 1.5, 2.5, 3.5])

    def test_window_must_be_positive(self):
        with pytest.raises(ConfigError):
            moving_average(np.array([1.0]), 0)

    def test_series_files(self, tmp_path, captured):
        reporter, _, _ = captured
        curve = tmp_path / "training_curve.csv"
        curve.write_text(
            "episode,mean_utility,normalized_utility,critic_loss,epsilon,wall_ms\n"
            "0,1.0,0.1,5.0,1.0,0.0\n"
            "1,3.0,0.3,4.0,0.5,0.0\n"
        )
        code = run_cli(["plot-data", "--curve", curve, "--window", 2, "--out", tmp_path / "plot"], reporter)
        assert code == EXIT_OK
        assert (tmp_path / "plot" / "mean_utility.csv").read_text() == (
            "episode,mean_utility,smoothed\n0,1.0,1.0\n1,3.0,2.0\n"
        )
        assert (tmp_path / "plot" / "epsilon.csv").exists()

    def test_missing_curve(self, tmp_path, captured):
        reporter, _, _ = captured
        assert run_cli(["plot-data", "--curve", tmp_path / "none.csv"], reporter) == EXIT_MISSING_FILE


def _end_to_end(root: Path, reporter) -> dict:
    train_dir, eval_dir = root / "train", root / "eval"
    assert run_cli(["train", "--config", DESK, "--episodes", 50, "--seed", 1, "--out", train_dir], reporter) == 0
    assert (
        run_cli(
            [
                "eval",
                "--config",
                DESK,
                "--seed",
                1,
                "--checkpoint",
                train_dir / "actor.tnn",
                "--count",
                10,
                "--out",
                eval_dir,
            ],
            reporter,
        )
        == 0
    )
    return {
        "curve": (train_dir / "training_curve.csv").read_bytes(),
        "metrics": (eval_dir / "metrics.csv").read_bytes(),
        "summary": (eval_dir / "summary.txt").read_bytes(),
        "actor": (train_dir / "actor.tnn").read_bytes(),
    }


@pytest.mark.slow
def test_end_to_end_runs_are_byte_identical(tmp_path, captured):
    reporter, _, _ = captured
    assert _end_to_end(tmp_path / "a", reporter) == _end_to_end(tmp_path / "b", reporter)


class TestCheckpointPaths:
    def test_tagged_and_default(self):
        paths = checkpoint_paths(["runs/a.tnn", "no_lia=runs/b.tnn"])
        assert paths == {"": Path("runs/a.tnn"), "no_lia": Path("runs/b.tnn")}

    def test_equals_inside_a_path_is_not_a_tag(self):
        assert checkpoint_paths(["runs/x=1/a.tnn"]) == {"": Path("runs/x=1/a.tnn")}

    def test_duplicate_tag(self):
        with pytest.raises(ConfigError):
            checkpoint_paths(["lia=a.tnn", "lia=b.tnn"])
