import dataclasses
from pathlib import Path
from typing import List, Optional

import typer

from redvit.errors import RedVitError
from redvit.eval.zoo import ZOO_REPORT, train_zoo as train_models, zoo_summary
from redvit.utils import (
    config_option, data_option, emit, format_list_markdown, format_result_markdown, load_data, load_experiment,
    output_error, output_option, resolve_output, seed_option,
)


def train_zoo(
    config: Optional[Path] = config_option(),
    seed: Optional[int] = seed_option(),
    data: Optional[Path] = data_option(),
    models: Optional[List[str]] = typer.Option(
        None, "--model", "-m", help="Train only these zoo models. Can be specified multiple times."
    ),
    output: Optional[str] = output_option(),
):
    """
    Train every zoo model and write one checkpoint per model plus the zoo summary.
    """
    output = resolve_output(output)
    try:
        experiment = load_experiment(config, seed)
        if models:
            specs = tuple(experiment.zoo.spec(name) for name in models)
            experiment = dataclasses.replace(experiment, zoo=dataclasses.replace(experiment.zoo, models=specs))
        zoo = train_models(experiment, load_data(experiment, data))
    except RedVitError as e:
        output_error(output, e, "Zoo", "train")
        raise typer.Exit(code=2)

    summary = {**zoo_summary(zoo, experiment), "report": str(Path(experiment.zoo.dir) / ZOO_REPORT)}
    table = format_list_markdown("Zoo", summary["models"], [
        ("Name", "name"), ("Kind", "kind"), ("Test accuracy", "accuracy"), ("Admitted", "admitted"), ("Checkpoint", "path"),
    ])
    rejected = [m["name"] for m in summary["models"] if not m["admitted"]]
    message = (f"{len(rejected)} model(s) below the {zoo.min_accuracy:.2f} admission gate: {', '.join(rejected)}"
               if rejected else f"All {len(summary['models'])} models admitted.")
    emit(output, summary, table + "\n\n" + format_result_markdown(not rejected, message, "Zoo", "train"))
