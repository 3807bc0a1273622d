import json

import pytest
from typer.testing import CliRunner

from redvit.cli import app


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


def test_train_zoo_flow(runner, trained_workspace):
    zoo_dir = trained_workspace["zoo"]

    # 1) Every configured model has a checkpoint and the summary lists them
    for name in ("vit_a", "vit_b", "cnn_a"):
        assert (zoo_dir / f"{name}.rvit").is_file()
    summary = json.loads((zoo_dir / "zoo.json").read_text())
    assert [m["name"] for m in summary["models"]] == ["vit_a", "vit_b", "cnn_a"]
    assert all(m["admitted"] for m in summary["models"])
    assert summary["min_accuracy"] == 0.0


def test_train_zoo_subset(runner, config_file, tmp_path):
    result = runner.invoke(app, ["train-zoo", "--config", str(config_file), "-m", "cnn_a", "--output", "json"])
    assert result.exit_code == 0, f"train-zoo failed: {result.stdout}"
    summary = json.loads(result.stdout)
    assert [m["name"] for m in summary["models"]] == ["cnn_a"]
    assert (tmp_path / "zoo" / "cnn_a.rvit").is_file()
    assert not (tmp_path / "zoo" / "vit_a.rvit").exists()


def test_train_zoo_unknown_model(runner, config_file):
    result = runner.invoke(app, ["train-zoo", "--config", str(config_file), "-m", "resnet", "--output", "json"])
    assert result.exit_code == 2
    assert json.loads(result.stdout)["error"] == "ConfigError"


def test_train_zoo_reports_rejected_models(runner, config_file):
    data = json.loads(config_file.read_text())
    data["zoo"]["min_accuracy"] = 1.01
    config_file.write_text(json.dumps(data), encoding="utf-8")
    result = runner.invoke(app, ["train-zoo", "--config", str(config_file), "-m", "cnn_a"])
    assert result.exit_code == 0
    assert "below the 1.01 admission gate: cnn_a" in result.stdout
    assert "- **status**: error" in result.stdout
