from pathlib import Path
from typing import Optional

import typer

from redvit.errors import RedVitError
from redvit.eval.metrics import attack_success_rate
from redvit.eval.transfer import METHODS, attack_slice, compare_methods, transfer_matrix, victim_names
from redvit.eval.zoo import ModelZoo
from redvit.io.batch import load_batch
from redvit.io.report import curve_csv, write_json, write_report, write_text
from redvit.utils import (
    config_option, data_option, emit, format_list_markdown, format_matrix_markdown, load_data, load_experiment,
    output_error, output_option, require_file, resolve_output, seed_option,
)


def evaluate(
    config: Optional[Path] = config_option(),
    seed: Optional[int] = seed_option(),
    data: Optional[Path] = data_option(),
    method: Optional[str] = typer.Option(None, "--method", help="Attack method: mi or ours (default: attack.method)"),
    compare: bool = typer.Option(False, "--compare", help="Compare mi against ours over several seeds"),
    seeds: int = typer.Option(5, "--seeds", min=1, help="Number of consecutive seeds for --compare"),
    adv: Optional[Path] = typer.Option(None, "--adv", help="Evaluate an existing adversarial batch on every victim"),
    output: Optional[str] = output_option(),
):
    """
    Measure transfer: surrogate by victim success-rate matrices, a method comparison, or a stored batch.
    """
    output = resolve_output(output)
    if method is not None and method not in METHODS:
        raise typer.BadParameter(f"expected one of {', '.join(METHODS)}, got '{method}'", param_hint="--method")
    try:
        experiment = load_experiment(config, seed)
        out = Path(experiment.output.dir)
        zoo = ModelZoo.load(experiment.zoo)
        if adv is not None:
            data_out, text = _evaluate_batch(zoo, experiment, adv, out)
        elif compare:
            images, labels = attack_slice(load_data(experiment, data), experiment)
            data_out, text = _compare(zoo, images, labels, experiment, seeds, out)
        else:
            images, labels = attack_slice(load_data(experiment, data), experiment)
            report = transfer_matrix(zoo, images, labels, experiment, method=method)
            stem = out / f"transfer-{report.method}"
            write_report(report, stem.with_suffix(".json"), "json")
            write_report(report, stem.with_suffix(".csv"), "csv")
            data_out = {k: v for k, v in report.to_dict().items() if k not in ("config", "losses")}
            text = format_matrix_markdown(f"Transfer ASR (%) - {report.method}", report.surrogates, report.victims,
                                          report.matrix, report.averages)
    except RedVitError as e:
        output_error(output, e, "Transfer", "evaluate")
        raise typer.Exit(code=2)
    emit(output, data_out, text)


def _evaluate_batch(zoo: ModelZoo, experiment, adv: Path, out: Path) -> tuple[dict, str]:
    batch = load_batch(require_file(adv, "adversarial batch"))
    victims = victim_names(experiment, zoo)
    rates = {v: attack_success_rate(zoo.get(v), batch.images, batch.labels) for v in victims}
    result = {"batch": str(adv), "header": batch.header(), "victims": rates,
              "seed": experiment.seed, "config_hash": experiment.config_hash()}
    write_json(result, out / f"{adv.stem}-eval.json")
    rows = [{"victim": v, "asr": r} for v, r in rates.items()]
    return result, format_list_markdown(f"ASR of {adv.name}", rows, [("Victim", "victim"), ("ASR", "asr")])


def _compare(zoo: ModelZoo, images, labels, experiment, seeds: int, out: Path) -> tuple[dict, str]:
    seed_list = [experiment.seed + k for k in range(seeds)]
    summary = compare_methods(zoo, images, labels, experiment, seed_list)
    write_json(summary, out / "compare.json")
    rows = [
        (v, s["mi"]["mean"], s["mi"]["std"], s["ours"]["mean"], s["ours"]["std"])
        for v, s in summary["victims"].items()
    ]
    write_text(curve_csv(rows, ("victim", "mi_mean", "mi_std", "ours_mean", "ours_std")), out / "compare.csv")
    items = [{"victim": r[0], "mi": r[1], "ours": r[3], "gain": r[3] - r[1]} for r in rows]
    text = format_list_markdown(f"Black-box ASR over {seeds} seeds", items, [
        ("Victim", "victim"), ("MI-FGSM", "mi"), ("Ours", "ours"), ("Gain", "gain"),
    ])
    text += f"\n\nVictims improved: {summary['victims_improved']} of {len(rows)}"
    return {k: v for k, v in summary.items() if k not in ("runs", "config")}, text
