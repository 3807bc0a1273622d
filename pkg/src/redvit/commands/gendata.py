from pathlib import Path
from typing import Optional

import typer

from redvit.errors import RedVitError
from redvit.eval.dataset import SHAPE_NAMES
from redvit.io.batch import ImageBatch, save_batch
from redvit.io.report import write_json
from redvit.utils import (
    config_option, emit, format_detail_markdown, load_data, load_experiment, output_error, output_option,
    resolve_output, seed_option,
)

DATASET_BATCH = "dataset.advb"
DATASET_REPORT = "dataset.json"


def gen_data(
    config: Optional[Path] = config_option(),
    seed: Optional[int] = seed_option(),
    output: Optional[str] = output_option(),
):
    """
    Generate the synthetic shapes dataset (or load the record file) and write it as an image batch.
    """
    output = resolve_output(output)
    try:
        experiment = load_experiment(config, seed)
        dataset = load_data(experiment)
        out = Path(experiment.output.dir)
        batch_path, report_path = out / DATASET_BATCH, out / DATASET_REPORT
        save_batch(ImageBatch(dataset.images, dataset.labels, 0.0, dataset.seed, experiment.config_hash()), batch_path)
        summary = {
            **dataset.describe(),
            "classes": list(SHAPE_NAMES) if dataset.source == "shapes" else None,
            "batch": str(batch_path),
            "seed": experiment.seed,
            "dataset_seed": dataset.seed,
            "config_hash": experiment.config_hash(),
        }
        write_json(summary, report_path)
    except RedVitError as e:
        output_error(output, e, "Dataset", "gen-data")
        raise typer.Exit(code=2)

    splits = summary["splits"]
    text = format_detail_markdown("Dataset", {**summary, **{f"{k}_count": v for k, v in splits.items()}}, [
        ("Source", "source"),
        ("Images", "count"),
        ("Train", "train_count"),
        ("Val", "val_count"),
        ("Test", "test_count"),
        ("Batch", "batch"),
        ("Config hash", "config_hash"),
    ])
    emit(output, summary, text)
