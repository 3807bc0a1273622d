"""
Unit tests for redvit.eval: datasets, metrics, training, the zoo, probes and sweeps.
"""
import dataclasses
import json
from pathlib import Path

import numpy as np
import pytest

from redvit.config.experiment import ExperimentConfig, ProbeConfig, ZooConfig
from redvit.errors import ConfigError, DimensionError, InputError, TrainingError, UndefinedRateError, ZooAdmissionError
from redvit.eval.dataset import Dataset, generate_shapes_dataset, load_dataset, load_record_file, render_shape
from redvit.eval.metrics import attack_success_rate, mean_std, row_average, success_rate
from redvit.eval.probes import redundancy_probe, run_probes
from redvit.eval.sweeps import DEFAULT_GRIDS, apply_point, sweep_points
from redvit.eval.train import train_model
from redvit.eval.zoo import ModelZoo, load_global_tokens, train_zoo
from redvit.model.base import predict
from redvit.model.cnn import ConvConfig, ConvNet


class FixedVictim:
    """Predicts a fixed class per image, read from the first pixel."""

    def logits(self, images, batch_size=256):
        classes = np.asarray(images)[:, 0, 0, 0].astype(int)
        out = np.zeros((len(classes), 10))
        out[np.arange(len(classes)), classes] = 1.0
        return out


def images_predicting(classes):
    images = np.zeros((len(classes), 2, 2, 3))
    images[:, 0, 0, 0] = classes
    return images


class TestDataset:
    """Tests for the procedural shapes dataset."""

    def test_balanced_classes(self):
        dataset = generate_shapes_dataset(1000, seed=0)
        assert dataset.describe()["per_class"] == [100] * 10
        assert dataset.images.shape == (1000, 32, 32, 3)

    def test_pixel_range(self):
        dataset = generate_shapes_dataset(50, seed=1)
        assert dataset.images.min() >= 0.0 and dataset.images.max() <= 1.0

    def test_deterministic(self):
        a = generate_shapes_dataset(30, seed=4)
        b = generate_shapes_dataset(30, seed=4)
        np.testing.assert_array_equal(a.images, b.images)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_images_regenerate_individually(self):
        dataset = generate_shapes_dataset(20, seed=2)
        np.testing.assert_array_equal(render_shape(int(dataset.labels[13]), 2, 13), dataset.images[13])

    @pytest.mark.parametrize("n", [0, -10, 15])
    def test_bad_size(self, n):
        with pytest.raises(InputError):
            generate_shapes_dataset(n, seed=0)

    def test_splits(self):
        dataset = generate_shapes_dataset(200, seed=0)
        assert dataset.describe()["splits"] == {"train": 160, "val": 20, "test": 20}
        images, labels = dataset.split("test")
        np.testing.assert_array_equal(labels, dataset.labels[180:])
        with pytest.raises(InputError):
            dataset.split("holdout")

    def test_record_file(self, tmp_path):
        records = np.zeros((2, 3073), dtype=np.uint8)
        records[:, 0] = [3, 7]
        records[1, 1:1025] = 255
        path = tmp_path / "data.bin"
        path.write_bytes(records.tobytes())
        dataset = load_record_file(path)
        np.testing.assert_array_equal(dataset.labels, [3, 7])
        assert dataset.images[1, :, :, 0].min() == 1.0 and dataset.images[1, :, :, 1].max() == 0.0

    def test_record_file_size(self, tmp_path):
        path = tmp_path / "data.bin"
        path.write_bytes(bytes(100))
        with pytest.raises(InputError):
            load_record_file(path)

    def test_load_from_config(self, tiny_experiment):
        assert len(load_dataset(tiny_experiment.dataset)) == 200


class TestMetrics:
    """Tests for success rates and their aggregation."""

    def test_success_rate(self):
        assert success_rate(np.array([1, 2, 3, 4]), np.array([1, 0, 3, 0])) == 0.5

    def test_filter_mask(self):
        assert success_rate(np.array([1, 2, 3]), np.array([1, 0, 0]), keep=np.array([True, True, False])) == 0.5

    def test_empty_after_filter(self):
        with pytest.raises(UndefinedRateError):
            success_rate(np.array([1]), np.array([1]), keep=np.array([False]))

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            success_rate(np.array([1, 2]), np.array([1]))

    def test_attack_success_rate_filters(self):
        victim = FixedVictim()
        labels = np.array([0, 1, 2, 3])
        clean = images_predicting([0, 1, 5, 5])
        adv = images_predicting([4, 1, 6, 6])
        assert attack_success_rate(victim, adv, labels) == 0.75
        assert attack_success_rate(victim, adv, labels, "clean-correct", clean) == 0.5
        with pytest.raises(InputError):
            attack_success_rate(victim, adv, labels, "clean-correct")
        with pytest.raises(InputError):
            attack_success_rate(victim, adv, labels, "none")

    def test_aggregation(self):
        assert row_average([0.2, 0.4]) == pytest.approx(0.3)
        assert mean_std([1.0, 3.0]) == (2.0, 1.0)
        with pytest.raises(UndefinedRateError):
            row_average([])


class DivergingModel:
    def __init__(self):
        self.parameters = {"w": np.zeros(2)}

    def loss_and_grads(self, images, labels):
        return float("nan"), {"w": np.zeros(2)}


class TestTraining:
    """Tests for momentum SGD."""

    @pytest.fixture
    def dataset(self):
        return generate_shapes_dataset(60, seed=0)

    def test_deterministic_and_moves_weights(self, dataset):
        zoo = ZooConfig(epochs=2, batch_size=16)
        a = ConvNet.initialize(ConvConfig(widths=(4,)), 0)
        b = ConvNet.initialize(ConvConfig(widths=(4,)), 0)
        start = {k: v.copy() for k, v in a.parameters.items()}
        ra = train_model(a, dataset, zoo, seed=1)
        train_model(b, dataset, zoo, seed=1)
        for key in start:
            np.testing.assert_array_equal(a.parameters[key], b.parameters[key])
        assert any(not np.array_equal(start[k], a.parameters[k]) for k in start)
        assert len(ra.epoch_losses) == 2
        assert 0.0 <= ra.test_accuracy <= 1.0

    def test_divergence_carries_config(self, dataset):
        with pytest.raises(TrainingError) as e:
            train_model(DivergingModel(), dataset, ZooConfig(epochs=1), seed=5, name="bad")
        assert e.value.config["model"] == "bad" and e.value.config["seed"] == 5

    def test_empty_training_split(self, dataset):
        empty = Dataset(dataset.images[:0], dataset.labels[:0], 0)
        with pytest.raises(InputError):
            train_model(DivergingModel(), empty, ZooConfig(epochs=1), seed=0)


class TestZoo:
    """Tests for training, saving and admitting zoo models."""

    @pytest.fixture
    def trained(self, tiny_experiment):
        dataset = load_dataset(tiny_experiment.dataset)
        return train_zoo(tiny_experiment, dataset)

    def test_checkpoints_reload(self, tiny_experiment, trained):
        images = np.random.default_rng(0).random((4, 32, 32, 3))
        loaded = ModelZoo.load(tiny_experiment.zoo)
        assert loaded.names == ["vit_a", "vit_b", "cnn_a"]
        for name in loaded.names:
            np.testing.assert_array_equal(predict(loaded.get(name), images), predict(trained.get(name), images))
            assert loaded.entry(name).accuracy == trained.entry(name).accuracy

    def test_zoo_summary_written(self, tiny_experiment, trained):
        summary = json.loads((Path(tiny_experiment.zoo.dir) / "zoo.json").read_text())
        assert [m["name"] for m in summary["models"]] == ["vit_a", "vit_b", "cnn_a"]
        assert summary["seed"] == tiny_experiment.seed
        assert summary["config_hash"] == tiny_experiment.config_hash()

    def test_admission_gate(self, tiny_experiment, trained):
        strict = dataclasses.replace(tiny_experiment.zoo, min_accuracy=1.01)
        zoo = ModelZoo.load(strict, names=["vit_a"])
        assert zoo.names == ["vit_a"]
        with pytest.raises(ZooAdmissionError):
            zoo.get("vit_a")

    def test_unknown_model(self, trained):
        with pytest.raises(ConfigError):
            trained.get("resnet")

    def test_global_tokens_only_in_global_mode(self, tiny_experiment):
        assert load_global_tokens(tiny_experiment, "vit_a") is None


class TestProbes:
    """Tests for the redundancy probes."""

    @pytest.fixture
    def data(self):
        dataset = generate_shapes_dataset(40, seed=3)
        return dataset.images, dataset.labels

    @pytest.mark.parametrize("kind", ["token-drop", "attn-zero", "head-drop", "ffn-drop"])
    def test_zero_ratio_is_clean_accuracy(self, tiny_vit, data, kind):
        images, labels = data
        curve = redundancy_probe(tiny_vit, kind, [0.0, 0.5], images, labels, seed=0, draws=2)
        clean = float(np.mean(predict(tiny_vit, images) == labels))
        assert curve.clean_accuracy == clean
        assert curve.points[0][2] == 0.0
        assert 0.0 <= curve.accuracy_at(0.5) <= 1.0

    def test_deterministic(self, tiny_vit, data):
        images, labels = data
        a = redundancy_probe(tiny_vit, "head-drop", [0.5], images, labels, seed=1, draws=2)
        b = redundancy_probe(tiny_vit, "head-drop", [0.5], images, labels, seed=1, draws=2)
        assert a.points == b.points

    def test_rejects_cnn_and_unknown_kind(self, tiny_vit, data):
        images, labels = data
        with pytest.raises(ConfigError):
            redundancy_probe(ConvNet.initialize(ConvConfig(widths=(4,)), 0), "head-drop", [0.0], images, labels, 0)
        with pytest.raises(ConfigError):
            redundancy_probe(tiny_vit, "pixel-drop", [0.0], images, labels, 0)

    def test_run_probes_limits_count(self, tiny_vit, data):
        images, labels = data
        curves = run_probes(tiny_vit, ProbeConfig(kinds=("token-drop",), ratios=(0.0,), draws=1, count=10),
                            images, labels, seed=0)
        expected = float(np.mean(predict(tiny_vit, images[:10]) == labels[:10]))
        assert curves["token-drop"].clean_accuracy == expected


class TestSweeps:
    """Tests for sweep configuration."""

    def test_operation_point(self):
        config = apply_point(ExperimentConfig(), "permute", (0.3, 0.25))
        assert (config.ops.permute.p, config.ops.permute.r) == (0.3, 0.25)
        assert config.policy.pool == ("permute",) and config.policy.s == 1 and not config.policy.learn
        assert config.robust.count == 0
        assert config.attack.method == "ours"

    def test_moe_point(self):
        config = apply_point(ExperimentConfig(), "moe", (4.0, 0.2))
        assert config.ops.moe.experts == 4 and config.ops.moe.drop == 0.2

    def test_robust_point(self):
        config = apply_point(ExperimentConfig(), "robust", (16.0,))
        assert config.robust.count == 16
        assert config.policy.pool == ("identity",)

    def test_point_arity(self):
        with pytest.raises(ConfigError):
            apply_point(ExperimentConfig(), "sparsify", (0.1, 0.2))

    def test_default_grids(self):
        assert len(DEFAULT_GRIDS["sparsify"]) == 10
        assert len(DEFAULT_GRIDS["moe"]) == 25

    def test_sweep_points(self):
        report = {"points": [{"params": {"p": 0.1, "r": 0.5}, "mean": 0.4, "std": 0.1}]}
        assert sweep_points(report) == [(0.1, 0.5, 0.4, 0.1)]
