from pathlib import Path
from typing import Optional

import typer

from redvit.errors import RedVitError
from redvit.eval.probes import run_probes
from redvit.eval.zoo import ModelZoo
from redvit.io.report import curve_csv, write_json, write_text
from redvit.utils import (
    config_option, data_option, emit, format_list_markdown, load_data, load_experiment, output_error,
    output_option, resolve_output, seed_option,
)


def probe(
    config: Optional[Path] = config_option(),
    seed: Optional[int] = seed_option(),
    data: Optional[Path] = data_option(),
    model: Optional[str] = typer.Option(None, "--model", "-m", help="Zoo model to probe (default: probe.model)"),
    output: Optional[str] = output_option(),
):
    """
    Accuracy of a trained ViT under growing token, attention, head and FFN removal; one CSV per probe.
    """
    output = resolve_output(output)
    try:
        experiment = load_experiment(config, seed)
        name = model or experiment.probe.model
        target = ModelZoo.load(experiment.zoo, names=[name]).get(name)
        images, labels = load_data(experiment, data).split("test")
        curves = run_probes(target, experiment.probe, images, labels, experiment.seed)
        out = Path(experiment.output.dir)
        for kind, curve in curves.items():
            write_text(curve_csv(curve.points), out / f"probe-{name}-{kind}.csv")
        report = {
            "model": name,
            "count": min(len(labels), experiment.probe.count),
            "draws": experiment.probe.draws,
            "curves": {kind: curve.to_dict()["points"] for kind, curve in curves.items()},
            "seed": experiment.seed,
            "config_hash": experiment.config_hash(),
        }
        write_json(report, out / f"probe-{name}.json")
    except RedVitError as e:
        output_error(output, e, "Probe", "probe")
        raise typer.Exit(code=2)

    ratios = [r for r, _, _ in next(iter(curves.values())).points] if curves else []
    rows = [{"ratio": f"{r:.2f}", **{kind: curve.accuracy_at(r) for kind, curve in curves.items()}} for r in ratios]
    text = format_list_markdown(f"Probe accuracy - {name}", rows, [("Ratio", "ratio")] + [(k, k) for k in curves])
    emit(output, report, text)
