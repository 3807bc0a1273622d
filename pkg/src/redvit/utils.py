import json
from pathlib import Path
from typing import Optional, Sequence

import typer
import yaml

from redvit.config.experiment import ExperimentConfig, load_config
from redvit.config.settings import Settings
from redvit.errors import InputError
from redvit.eval.dataset import Dataset, load_dataset
from redvit.io.batch import load_batch
from redvit.io.report import canonicalize, to_canonical_json
from redvit.rng import SEED_MAX

OUTPUT_FORMATS = ("text", "json", "yaml")


def resolve_output(output: Optional[str]) -> str:
    output = output or Settings().output
    if output not in OUTPUT_FORMATS:
        raise typer.BadParameter(f"expected one of {', '.join(OUTPUT_FORMATS)}, got '{output}'", param_hint="--output")
    return output


def load_experiment(config: Optional[Path], seed: Optional[int]) -> ExperimentConfig:
    """Experiment config from --config (defaults when absent) with --seed applied."""
    return load_config(config).with_seed(seed)


def _escape_cell(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        value = f"{value:.4f}"
    s = str(value)
    s = s.replace("|", "\\|")
    s = s.replace("\n", "<br>")
    return s


def format_list_markdown(title: str, items: list[dict], columns: list[tuple[str, str]]) -> str:
    lines = [f"## {title}", ""]
    headers = [col[0] for col in columns]
    lines.append("| " + " | ".join(headers) + " |")
    lines.append("| " + " | ".join("---" for _ in columns) + " |")
    for item in items:
        row = [_escape_cell(item.get(key)) for _, key in columns]
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines)


def format_detail_markdown(title: str, data: dict, fields: list[tuple[str, str]]) -> str:
    lines = [f"## {title}", ""]
    lines.append("| Field | Value |")
    lines.append("| --- | --- |")
    for display_name, key in fields:
        lines.append(f"| {_escape_cell(display_name)} | {_escape_cell(data.get(key))} |")
    return "\n".join(lines)


def format_matrix_markdown(title: str, surrogates: Sequence[str], victims: Sequence[str],
                           matrix: Sequence[Sequence[float]], averages: Sequence[float]) -> str:
    """Surrogate rows against victim columns, ASR in percent, with the row average last."""
    lines = [f"## {title}", ""]
    lines.append("| surrogate | " + " | ".join(victims) + " | avg |")
    lines.append("| --- | " + " | ".join("---" for _ in victims) + " | --- |")
    for name, row, avg in zip(surrogates, matrix, averages):
        cells = [f"{100 * v:.1f}" for v in row]
        lines.append(f"| {_escape_cell(name)} | " + " | ".join(cells) + f" | {100 * avg:.1f} |")
    return "\n".join(lines)


def format_result_markdown(success: bool, message: str, resource_type: str,
                           action: str, artifacts: Sequence[str] = ()) -> str:
    status = "success" if success else "error"
    lines = ["## Result", ""]
    lines.append(f"- **status**: {status}")
    lines.append(f"- **action**: {action}")
    lines.append(f"- **resource_type**: {resource_type}")
    for path in artifacts:
        lines.append(f"- **artifact**: {path}")
    lines.append(f"- **message**: {message}")
    return "\n".join(lines)


def emit(output: str, data: dict, text: str):
    """Print data as canonical JSON, YAML, or the given markdown text."""
    if output == "json":
        typer.echo(to_canonical_json(data), nl=False)
    elif output == "yaml":
        typer.echo(yaml.safe_dump(canonicalize(data), sort_keys=True), nl=False)
    else:
        typer.echo(text)


def output_error(output: str, error: Exception, resource_type: str, action: str):
    payload = {
        "status": "error",
        "resource_type": resource_type,
        "action": action,
        "error": type(error).__name__,
        "message": str(error),
    }
    if output == "json":
        typer.echo(json.dumps(payload, indent=2))
    elif output == "yaml":
        typer.echo(yaml.dump(payload))
    else:
        typer.echo(format_result_markdown(False, str(error), resource_type, action))


def require_file(path: Path, what: str) -> Path:
    if not path.is_file():
        raise InputError(f"{what} '{path}' does not exist")
    return path


def load_data(config: ExperimentConfig, data: Optional[Path] = None) -> Dataset:
    """The configured dataset, or the image batch written by gen-data when --data is given."""
    if data is None:
        return load_dataset(config.dataset)
    batch = load_batch(require_file(data, "dataset batch"))
    return Dataset(batch.images, batch.labels, batch.seed, config.dataset.train, config.dataset.val, source="batch")


def config_option():
    return typer.Option(None, "--config", "-c", help="Experiment config (JSON); defaults apply when omitted")


def seed_option():
    return typer.Option(None, "--seed", min=0, max=SEED_MAX, help="Global seed; overrides the config's seed")


def data_option():
    return typer.Option(None, "--data", help="Dataset batch written by gen-data; regenerated from the config when omitted")


def output_option():
    return typer.Option(None, "--output", "-o", help="Output format: text, json, yaml")
