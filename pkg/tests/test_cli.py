"""End-to-end tests of the command-line interface."""

import json

import pytest

from m2i2.harness.cli import main

TINY = [
    "--env", "hallway",
    "--set", "env.chain_lengths=2,2",
    "--set", "learner.batch_size=4",
    "--set", "learner.buffer_capacity=32",
    "--set", "run.eval_interval=60",
    "--set", "run.eval_episodes=2",
    "--set", "run.batch_size_run=2",
    "--set", "run.updates_per_episode=0.25",
    "--total-steps", "60",
]


@pytest.fixture(scope="module")
def cli_root(tmp_path_factory):
    return tmp_path_factory.mktemp("cli_runs")


@pytest.fixture(scope="module")
def trained(cli_root):
    """One m2i2 run and one silent qmix baseline, trained through the CLI."""
    root_patch = pytest.MonkeyPatch()
    root_patch.setenv("M2I2_OUTPUT_ROOT", str(cli_root))
    try:
        assert main(["train", *TINY, "--seed", "1", "--name", "talk"]) == 0
        assert main(["train", *TINY, "--seed", "1", "--variant", "qmix", "--name", "silent"]) == 0
    finally:
        root_patch.undo()
    return cli_root / "talk", cli_root / "silent"


@pytest.fixture(autouse=True)
def output_root_env(cli_root, monkeypatch):
    monkeypatch.setenv("M2I2_OUTPUT_ROOT", str(cli_root))


def test_train_writes_under_output_root(trained, capsys):
    talk, silent = trained
    assert talk.is_dir() and silent.is_dir()
    assert (talk / "metrics.jsonl").exists()
    assert (talk / "checkpoint.pt").exists()


def test_train_accepts_config_file(cli_root, tmp_path, capsys):
    cfg = tmp_path / "tiny.txt"
    cfg.write_text(
        "env.kind = hallway\n"
        "env.chain_lengths = 2,2\n"
        "learner.batch_size = 4\n"
        "learner.buffer_capacity = 32\n"
        "run.total_steps = 60\n"
        "run.eval_interval = 60\n"
        "run.eval_episodes = 2\n"
        "run.batch_size_run = 2\n"
        "run.updates_per_episode = 0.25\n"
    )
    assert main(["train", "--config", str(cfg), "--seed", "2", "--name", "from_file",
                 "--set", "run.eval_episodes=3"]) == 0
    out = capsys.readouterr().out
    assert "run directory:" in out
    saved = (cli_root / "from_file" / "config.txt").read_text()
    assert "run.eval_episodes = 3" in saved
    assert "run.seed = 2" in saved


def test_eval_prints_summary(trained, capsys):
    assert main(["eval", "--run", "talk", "--episodes", "2", "--seed", "4"]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["episodes"] == 2
    assert summary["variant"] == "m2i2"
    assert 0.0 <= summary["win_rate"] <= 1.0


def test_eval_accepts_explicit_path(trained, capsys):
    talk, _ = trained
    assert main(["eval", "--run", str(talk), "--episodes", "2"]) == 0
    assert json.loads(capsys.readouterr().out)["episodes"] == 2


def test_efficiency_from_explicit_values(capsys, tmp_path):
    out_path = tmp_path / "report.json"
    assert main(["efficiency", "--perf", "0.9936", "--baseline-perf", "0.0",
                 "--frequency", "0.6", "--out", str(out_path)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["efficiency"] == pytest.approx(1.656)
    assert report["improvement"] == pytest.approx(0.9936)
    assert json.loads(out_path.read_text()) == report


def test_efficiency_from_run_directories(trained, capsys):
    assert main(["efficiency", "--run", "talk", "--baseline", "silent"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["metric"] == "test_win_rate"
    assert 0.0 < report["frequency"] <= 1.0
    expected = (report["performance"] - report["baseline_performance"]) / report["frequency"]
    assert report["efficiency"] == pytest.approx(expected)


def test_efficiency_requires_values_or_runs(capsys):
    assert main(["efficiency", "--perf", "0.5"]) == 2
    assert "error:" in capsys.readouterr().err


def test_export_writes_artifacts(trained, capsys):
    talk, _ = trained
    assert main(["export", "talk", "--segments", "pos:0:3,id:3:5"]) == 0
    out = capsys.readouterr().out
    assert "retention:" in out and "embeddings:" in out
    retention = json.loads((talk / "mask_retention.json").read_text())
    assert set(retention["segments"]) == {"pos", "id"}


def test_export_without_records_fails_cleanly(trained, capsys):
    assert main(["export", "silent"]) == 2
    assert "communication" in capsys.readouterr().err


def test_plot_groups_by_variant(trained, cli_root, capsys):
    out = cli_root / "curves.png"
    losses = cli_root / "losses.png"
    assert main(["plot", "talk", "silent", "--out", str(out),
                 "--losses", str(losses)]) == 0
    assert out.exists() and losses.exists()


def test_plot_ungrouped(trained, cli_root, capsys):
    out = cli_root / "flat.png"
    assert main(["plot", "talk", "--group-by", "none", "--out", str(out)]) == 0
    assert out.exists()


def test_missing_run_directory_exits_2(capsys):
    assert main(["eval", "--run", "no_such_run"]) == 2
    assert "no run directory" in capsys.readouterr().err


def test_bad_config_value_exits_2(capsys):
    assert main(["train", *TINY, "--set", "learner.nonsense=1"]) == 2
    assert "unknown learner option" in capsys.readouterr().err


def test_ablate_grid(cli_root, capsys):
    assert main([
        "ablate", *TINY, "--seeds", "1", "--variants", "qmix",
        "--rates", "0.5", "--prefix", "grid",
    ]) == 0
    out = capsys.readouterr().out
    assert "grid_qmix_seed0:" in out
    assert "grid_rate0.5_seed0:" in out
    rate_cfg = (cli_root / "grid_rate0.5_seed0" / "config.txt").read_text()
    assert "learner.mask_ratio = 0.5" in rate_cfg
    assert "variant = m2i2" in rate_cfg
