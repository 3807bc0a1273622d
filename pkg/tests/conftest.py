import json
import os
from pathlib import Path

import numpy as np
import pytest

from redvit.attack.policy import init_policy
from redvit.config.experiment import ExperimentConfig
from redvit.model.vit import ViTConfig, VisionTransformer

TINY_VIT = {"kind": "vit", "num_layers": 1, "hidden_dim": 8, "num_heads": 2, "ffn_hidden": 16, "patch_size": 8}


def tiny_config_dict(root: Path) -> dict:
    """A configuration small enough to run every subcommand within seconds."""
    return {
        "seed": 3,
        "dataset": {"n": 200, "seed": 0},
        "zoo": {
            "models": [
                {"name": "vit_a", **TINY_VIT, "seed": 1},
                {"name": "vit_b", **TINY_VIT, "seed": 2},
                {"name": "cnn_a", "kind": "cnn", "widths": [4, 8], "seed": 3},
            ],
            "epochs": 1,
            "batch_size": 32,
            "min_accuracy": 0.0,
            "dir": str(root / "zoo"),
        },
        "attack": {"steps": 2, "surrogate": "vit_a", "surrogates": ["vit_a", "vit_b"], "count": 3},
        "robust": {"count": 2, "outer_steps": 1, "inner_steps": 1, "epochs": 1, "batch_size": 2, "calibration": 4},
        "probe": {"model": "vit_a", "ratios": [0.0, 0.5], "draws": 1, "count": 20},
        "sweep": {"kind": "sparsify", "seeds": 1, "count": 2, "grid": [[0.0], [0.5]]},
        "output": {"dir": str(root / "out")},
    }


@pytest.fixture
def tiny_vit_config():
    return ViTConfig(hidden_dim=8, num_layers=2, num_heads=2, ffn_hidden=16)


@pytest.fixture
def tiny_vit(tiny_vit_config):
    return VisionTransformer.initialize(tiny_vit_config, seed=7)


@pytest.fixture
def image():
    return np.random.default_rng(11).random((32, 32, 3))


@pytest.fixture
def uniform_policy():
    return init_policy(num_layers=4, pool=("identity", "sparsify", "permute", "clean", "moe"), s=1, lr=0.01, prob_floor=0.01)


@pytest.fixture
def tiny_experiment(tmp_path):
    return ExperimentConfig.from_dict(tiny_config_dict(tmp_path))


@pytest.fixture
def config_file(tmp_path):
    """Writes the tiny configuration to disk and returns its path."""
    path = tmp_path / "config.json"
    path.write_text(json.dumps(tiny_config_dict(tmp_path)), encoding="utf-8")
    return path


def pytest_collection_modifyitems(config, items):
    if os.getenv("REDVIT_ACCEPTANCE") == "1":
        return
    skip = pytest.mark.skip(reason="desk-scale acceptance runs need REDVIT_ACCEPTANCE=1")
    for item in items:
        if "acceptance" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(scope="session")
def trained_workspace(tmp_path_factory):
    """A tiny config plus a trained zoo, shared by the command flow tests."""
    from typer.testing import CliRunner

    from redvit.cli import app

    root = tmp_path_factory.mktemp("workspace")
    config = root / "config.json"
    config.write_text(json.dumps(tiny_config_dict(root)), encoding="utf-8")
    result = CliRunner().invoke(app, ["train-zoo", "--config", str(config), "--output", "json"])
    assert result.exit_code == 0, f"train-zoo failed: {result.stdout}"
    yield {"root": root, "config": config, "zoo": root / "zoo", "out": root / "out"}
