from pathlib import Path
from typing import Optional

import typer

from redvit.autodiff.gradcheck import DEFAULT_STEP, check_primitives
from redvit.errors import RedVitError
from redvit.model.checks import check_model
from redvit.utils import (
    config_option, emit, format_list_markdown, load_experiment, output_error, output_option, resolve_output,
    seed_option,
)

TOLERANCE = 1e-5


def gradcheck(
    config: Optional[Path] = config_option(),
    seed: Optional[int] = seed_option(),
    points: int = typer.Option(20, "--points", min=1, help="Random inputs per primitive"),
    pixels: int = typer.Option(30, "--pixels", min=1, help="Checked coordinates per full-model case"),
    step: float = typer.Option(DEFAULT_STEP, "--step", help="Central-difference step"),
    tolerance: float = typer.Option(TOLERANCE, "--tolerance", help="Largest accepted relative error"),
    primitives_only: bool = typer.Option(False, "--primitives-only", help="Skip the full-model checks"),
    output: Optional[str] = output_option(),
):
    """
    Compare taped gradients against central differences for every primitive and the full toy ViT.
    """
    output = resolve_output(output)
    try:
        seed = load_experiment(config, seed).seed
        results = check_primitives(seed, points, step)
        if not primitives_only:
            results.update(check_model(seed, pixels, h=step))
    except RedVitError as e:
        output_error(output, e, "Gradient", "gradcheck")
        raise typer.Exit(code=2)

    failed = sorted(name for name, err in results.items() if not err < tolerance)
    rows = [{"check": name, "error": f"{err:.3e}", "ok": err < tolerance} for name, err in results.items()]
    summary = {"max_relative_error": results, "tolerance": tolerance, "step": step, "seed": seed, "failed": failed}
    emit(output, summary, format_list_markdown("Gradient check", rows, [
        ("Check", "check"), ("Max relative error", "error"), ("OK", "ok"),
    ]))
    if failed:
        raise typer.Exit(code=2)
