import dataclasses
from pathlib import Path
from typing import Optional

import typer

from redvit.attack.robust import robustify_global
from redvit.errors import ConfigError, RedVitError
from redvit.eval.zoo import ModelZoo, checkpoint_for, robust_checkpoint_path
from redvit.io.checkpoint import save_checkpoint
from redvit.utils import (
    config_option, data_option, emit, format_detail_markdown, load_data, load_experiment, output_error,
    output_option, resolve_output, seed_option,
)


def robustify(
    config: Optional[Path] = config_option(),
    seed: Optional[int] = seed_option(),
    data: Optional[Path] = data_option(),
    surrogate: Optional[str] = typer.Option(None, "--surrogate", help="Zoo surrogate (default: attack.surrogate)"),
    output: Optional[str] = output_option(),
):
    """
    Train global robust tokens on a calibration slice of the training split and store them
    in a copy of the surrogate checkpoint.
    """
    output = resolve_output(output)
    try:
        experiment = load_experiment(config, seed)
        robust = experiment.robust
        if robust.count == 0:
            raise ConfigError("robust.count is 0; there are no tokens to train")
        name = surrogate or experiment.attack.surrogate
        zoo = ModelZoo.load(experiment.zoo, names=[name])
        zoo.get(name)
        images, labels = load_data(experiment, data).split("train")
        images, labels = images[:robust.calibration], labels[:robust.calibration]
        tokens = robustify_global(images, labels, zoo.entry(name).model, robust, experiment.attack, experiment.seed)
        path = robust_checkpoint_path(experiment, name)
        checkpoint = checkpoint_for(zoo.entry(name), experiment, surrogate=name)
        save_checkpoint(dataclasses.replace(checkpoint, robust_tokens=tokens), path)
        summary = {
            "surrogate": name,
            "count": tokens.count,
            "calibration": len(labels),
            "epochs": robust.epochs,
            "checkpoint": str(path),
            "seed": experiment.seed,
            "config_hash": experiment.config_hash(),
        }
    except RedVitError as e:
        output_error(output, e, "RobustTokens", "robustify")
        raise typer.Exit(code=2)

    text = format_detail_markdown("Robust tokens", summary, [
        ("Surrogate", "surrogate"),
        ("Tokens", "count"),
        ("Calibration images", "calibration"),
        ("Epochs", "epochs"),
        ("Checkpoint", "checkpoint"),
    ])
    emit(output, summary, text)
