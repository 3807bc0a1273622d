import json

import numpy as np
import pytest
from typer.testing import CliRunner

from redvit.cli import app
from redvit.io.batch import load_batch


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


def test_gen_data_flow(runner, config_file, tmp_path):
    # 1) Generate the dataset batch and summary
    result = runner.invoke(app, ["gen-data", "--config", str(config_file), "--output", "json"])
    assert result.exit_code == 0, f"gen-data failed: {result.stdout}"
    summary = json.loads(result.stdout)
    assert summary["count"] == 200
    assert summary["per_class"] == [20] * 10
    assert summary["splits"] == {"train": 160, "val": 20, "test": 20}
    assert summary["classes"][0] == "circle"

    # 2) The batch holds the images with epsilon 0
    batch = load_batch(tmp_path / "out" / "dataset.advb")
    assert batch.images.shape == (200, 32, 32, 3)
    assert batch.epsilon == 0.0
    assert batch.config_hash == summary["config_hash"]

    # 3) A second run writes byte-identical files
    first = (tmp_path / "out" / "dataset.advb").read_bytes()
    report = (tmp_path / "out" / "dataset.json").read_bytes()
    result = runner.invoke(app, ["gen-data", "--config", str(config_file), "--output", "json"])
    assert result.exit_code == 0
    assert (tmp_path / "out" / "dataset.advb").read_bytes() == first
    assert (tmp_path / "out" / "dataset.json").read_bytes() == report

    # 4) The seed flag changes the config hash but not the dataset seed
    result = runner.invoke(app, ["gen-data", "--config", str(config_file), "--seed", "9", "--output", "json"])
    assert result.exit_code == 0
    reseeded = json.loads(result.stdout)
    assert reseeded["seed"] == 9 and reseeded["dataset_seed"] == 0
    assert reseeded["config_hash"] != summary["config_hash"]
    np.testing.assert_array_equal(load_batch(tmp_path / "out" / "dataset.advb").images, batch.images)


def test_gen_data_text_output(runner, config_file):
    result = runner.invoke(app, ["gen-data", "--config", str(config_file)])
    assert result.exit_code == 0
    assert "## Dataset" in result.stdout
    assert "| Images | 200 |" in result.stdout


def test_gen_data_bad_config(runner, tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"dataset": {"n": 15}}), encoding="utf-8")
    result = runner.invoke(app, ["gen-data", "--config", str(path), "--output", "json"])
    assert result.exit_code == 2
    assert json.loads(result.stdout)["error"] == "InputError"
