from pathlib import Path
from typing import Optional

import typer

from redvit.attack.mifgsm import check_budget
from redvit.attack.redundant import attack_batch
from redvit.errors import RedVitError
from redvit.eval.metrics import attack_success_rate
from redvit.eval.transfer import METHODS, attack_slice
from redvit.eval.zoo import ModelZoo, load_global_tokens
from redvit.io.batch import ImageBatch, save_batch
from redvit.io.report import write_json
from redvit.utils import (
    config_option, data_option, emit, format_detail_markdown, load_data, load_experiment, output_error,
    output_option, resolve_output, seed_option,
)


def attack(
    config: Optional[Path] = config_option(),
    seed: Optional[int] = seed_option(),
    data: Optional[Path] = data_option(),
    method: Optional[str] = typer.Option(None, "--method", help="Attack method: mi or ours (default: attack.method)"),
    surrogate: Optional[str] = typer.Option(None, "--surrogate", help="Zoo surrogate (default: attack.surrogate)"),
    output: Optional[str] = output_option(),
):
    """
    Attack the configured test slice with one surrogate; write the adversarial batch and a report.
    """
    output = resolve_output(output)
    if method is not None and method not in METHODS:
        raise typer.BadParameter(f"expected one of {', '.join(METHODS)}, got '{method}'", param_hint="--method")
    try:
        experiment = load_experiment(config, seed)
        method = method or experiment.attack.method
        surrogate = surrogate or experiment.attack.surrogate
        images, labels = attack_slice(load_data(experiment, data), experiment)
        model = ModelZoo.load(experiment.zoo, names=[surrogate]).get(surrogate)
        tokens = load_global_tokens(experiment, surrogate) if method == "ours" else None
        result = attack_batch(images, labels, model, experiment, method, tokens)
        check_budget(result.x_adv, images, experiment.attack.epsilon)

        stem = Path(experiment.output.dir) / f"attack-{surrogate}-{method}"
        batch_path, report_path = stem.with_suffix(".advb"), stem.with_suffix(".json")
        save_batch(ImageBatch(result.x_adv, result.labels, experiment.attack.epsilon, experiment.seed,
                              experiment.config_hash()), batch_path)
        report = {
            "surrogate": surrogate,
            "method": method,
            "count": len(labels),
            "epsilon": experiment.attack.epsilon,
            "white_box_asr": attack_success_rate(model, result.x_adv, labels, experiment.attack.filter, images),
            "filter": experiment.attack.filter,
            "policy": None if result.final_policy is None else result.final_policy.to_dict(),
            "per_image": result.per_image,
            "batch": str(batch_path),
            "seed": experiment.seed,
            "config_hash": experiment.config_hash(),
            "config": experiment.to_dict(),
        }
        write_json(report, report_path)
    except RedVitError as e:
        output_error(output, e, "Attack", "attack")
        raise typer.Exit(code=2)

    text = format_detail_markdown("Attack", {**report, "report": str(report_path)}, [
        ("Surrogate", "surrogate"),
        ("Method", "method"),
        ("Images", "count"),
        ("Epsilon", "epsilon"),
        ("White-box ASR", "white_box_asr"),
        ("Adversarial batch", "batch"),
        ("Report", "report"),
        ("Config hash", "config_hash"),
    ])
    emit(output, {key: report[key] for key in report if key not in ("per_image", "config")}, text)
