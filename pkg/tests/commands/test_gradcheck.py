import json

import pytest
from typer.testing import CliRunner

from redvit.cli import app


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


def test_gradcheck_primitives(runner):
    result = runner.invoke(app, ["gradcheck", "--primitives-only", "--points", "2", "--output", "json"])
    assert result.exit_code == 0, f"gradcheck failed: {result.stdout}"
    summary = json.loads(result.stdout)
    assert summary["failed"] == []
    assert summary["tolerance"] == 1e-5
    assert all(err < 1e-5 for err in summary["max_relative_error"].values())
    assert "softmax" in " ".join(summary["max_relative_error"])


def test_gradcheck_full_model_text(runner):
    result = runner.invoke(app, ["gradcheck", "--points", "1", "--pixels", "3"])
    assert result.exit_code == 0, f"gradcheck failed: {result.stdout}"
    assert "## Gradient check" in result.stdout
    assert "vit/moe/image" in result.stdout
    assert "vit/clean/robust-tokens" in result.stdout


def test_gradcheck_tolerance_exceeded(runner):
    result = runner.invoke(app, ["gradcheck", "--primitives-only", "--points", "1", "--tolerance", "0",
                                 "--output", "json"])
    assert result.exit_code == 2
    assert json.loads(result.stdout)["failed"]


def test_gradcheck_bad_step(runner):
    result = runner.invoke(app, ["gradcheck", "--primitives-only", "--points", "1", "--step", "0",
                                 "--output", "json"])
    assert result.exit_code == 2
    assert json.loads(result.stdout)["status"] == "error"
