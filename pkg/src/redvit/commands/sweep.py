import dataclasses
from pathlib import Path
from typing import Optional

import typer

from redvit.config.experiment import SWEEP_KINDS
from redvit.errors import RedVitError
from redvit.eval.sweeps import PARAM_NAMES, run_sweep, sweep_points
from redvit.eval.transfer import attack_slice
from redvit.eval.zoo import ModelZoo
from redvit.io.report import curve_csv, write_json, write_text
from redvit.utils import (
    config_option, data_option, emit, format_list_markdown, load_data, load_experiment, output_error,
    output_option, resolve_output, seed_option,
)


def sweep(
    config: Optional[Path] = config_option(),
    seed: Optional[int] = seed_option(),
    data: Optional[Path] = data_option(),
    kind: Optional[str] = typer.Option(None, "--kind", help=f"Swept quantity: {', '.join(SWEEP_KINDS)} (default: sweep.kind)"),
    output: Optional[str] = output_option(),
):
    """
    Black-box success rate over a grid of one operation's parameters, or over the robust-token count.
    """
    output = resolve_output(output)
    if kind is not None and kind not in SWEEP_KINDS:
        raise typer.BadParameter(f"expected one of {', '.join(SWEEP_KINDS)}, got '{kind}'", param_hint="--kind")
    try:
        experiment = load_experiment(config, seed)
        if kind is not None and kind != experiment.sweep.kind:
            experiment = dataclasses.replace(experiment, sweep=dataclasses.replace(experiment.sweep, kind=kind, grid=()))
        dataset = load_data(experiment, data)
        images, labels = attack_slice(dataset, experiment)
        zoo = ModelZoo.load(experiment.zoo)
        report = run_sweep(zoo, dataset, images, labels, experiment)
        stem = Path(experiment.output.dir) / f"sweep-{report['kind']}"
        write_json(report, stem.with_suffix(".json"))
        columns = PARAM_NAMES[report["kind"]] + ("mean", "std")
        write_text(curve_csv(sweep_points(report), columns), stem.with_suffix(".csv"))
    except RedVitError as e:
        output_error(output, e, "Sweep", "sweep")
        raise typer.Exit(code=2)

    rows = [{**p["params"], "mean": p["mean"], "std": p["std"]} for p in report["points"]]
    text = format_list_markdown(f"Sweep {report['kind']} - black-box ASR", rows, [(c, c) for c in columns])
    emit(output, {k: v for k, v in report.items() if k != "config"}, text)
