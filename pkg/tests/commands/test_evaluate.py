import csv
import json

import pytest
from typer.testing import CliRunner

from redvit.cli import app


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


def test_evaluate_matrix_flow(runner, trained_workspace):
    config, out = str(trained_workspace["config"]), trained_workspace["out"]

    # 1) Transfer matrix for plain MI-FGSM
    result = runner.invoke(app, ["evaluate", "--config", config, "--method", "mi", "--output", "json"])
    assert result.exit_code == 0, f"evaluate failed: {result.stdout}"
    report = json.loads(result.stdout)
    assert report["surrogates"] == ["vit_a", "vit_b"]
    assert report["victims"] == ["vit_a", "vit_b", "cnn_a"]
    assert len(report["matrix"]) == 2 and all(len(row) == 3 for row in report["matrix"])
    assert all(0.0 <= v <= 1.0 for row in report["matrix"] for v in row)

    # 2) JSON and CSV reports agree on the averages
    with open(out / "transfer-mi.csv", newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["surrogate", "vit_a", "vit_b", "cnn_a", "avg"]
    stored = json.loads((out / "transfer-mi.json").read_text())
    assert float(rows[1][-1]) == pytest.approx(stored["averages"][0], rel=1e-5)
    assert stored["config_hash"] == report["config_hash"]

    # 3) Text output renders percentages
    result = runner.invoke(app, ["evaluate", "--config", config, "--method", "mi"])
    assert result.exit_code == 0
    assert "| surrogate | vit_a | vit_b | cnn_a | avg |" in result.stdout


def test_evaluate_compare(runner, trained_workspace):
    config, out = str(trained_workspace["config"]), trained_workspace["out"]
    result = runner.invoke(app, ["evaluate", "--config", config, "--compare", "--seeds", "2", "--output", "json"])
    assert result.exit_code == 0, f"evaluate --compare failed: {result.stdout}"
    summary = json.loads(result.stdout)
    assert summary["seeds"] == [3, 4]
    assert set(summary["victims"]) == {"vit_a", "vit_b", "cnn_a"}
    assert 0 <= summary["victims_improved"] <= 3
    header = (out / "compare.csv").read_text().splitlines()[0]
    assert header == "victim,mi_mean,mi_std,ours_mean,ours_std"


def test_evaluate_stored_batch(runner, trained_workspace):
    config, out = str(trained_workspace["config"]), trained_workspace["out"]
    result = runner.invoke(app, ["attack", "--config", config, "--method", "mi", "--output", "json"])
    assert result.exit_code == 0
    result = runner.invoke(app, ["evaluate", "--config", config, "--adv", str(out / "attack-vit_a-mi.advb"),
                                 "--output", "json"])
    assert result.exit_code == 0, f"evaluate --adv failed: {result.stdout}"
    summary = json.loads(result.stdout)
    assert set(summary["victims"]) == {"vit_a", "vit_b", "cnn_a"}
    assert summary["header"]["count"] == 3
    assert (out / "attack-vit_a-mi-eval.json").is_file()


def test_evaluate_missing_batch(runner, trained_workspace, tmp_path):
    result = runner.invoke(app, ["evaluate", "--config", str(trained_workspace["config"]),
                                 "--adv", str(tmp_path / "none.advb"), "--output", "json"])
    assert result.exit_code == 2
    assert json.loads(result.stdout)["error"] == "InputError"
