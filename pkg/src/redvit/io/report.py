"""
Report writers.

JSON reports are canonical: sorted keys, fixed separators and every float rounded to six
significant digits, so writing the same report twice yields byte-identical files.
"""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Any, Protocol, Sequence

import numpy as np

from redvit.errors import InputError, ReportIOError

SIGNIFICANT_DIGITS = 6


class MatrixReport(Protocol):
    surrogates: list[str]
    victims: list[str]
    matrix: list[list[float]]

    def to_dict(self) -> dict: ...


def round_significant(value: float) -> float:
    return float(f"{value:.{SIGNIFICANT_DIGITS}g}")


def canonicalize(value: Any) -> Any:
    """Plain JSON types with floats rounded; non-finite floats become null."""
    if isinstance(value, dict):
        return {str(k): canonicalize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [canonicalize(v) for v in value]
    if isinstance(value, np.ndarray):
        return canonicalize(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return round_significant(float(value)) if math.isfinite(value) else None
    return value


def to_canonical_json(report: Any) -> str:
    return json.dumps(canonicalize(report), sort_keys=True, indent=2) + "\n"


def _format(value) -> str:
    if isinstance(value, (float, np.floating)):
        return f"{value:.{SIGNIFICANT_DIGITS}g}"
    return str(value)


def matrix_csv(surrogates: Sequence[str], victims: Sequence[str], matrix: Sequence[Sequence[float]]) -> str:
    """Surrogate rows, victim columns and a trailing avg column (the row mean)."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["surrogate", *victims, "avg"])
    for name, row in zip(surrogates, matrix):
        if len(row) != len(victims):
            raise InputError(f"row '{name}' has {len(row)} entries for {len(victims)} victims")
        avg = float(np.mean(row)) if len(row) else float("nan")
        writer.writerow([name, *(_format(v) for v in row), _format(avg)])
    return buffer.getvalue()


def curve_csv(points: Sequence[Sequence], columns: Sequence[str] = ("ratio", "accuracy", "stddev")) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for point in points:
        writer.writerow([_format(v) for v in point])
    return buffer.getvalue()


def write_text(text: str, path: str | Path):
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="utf-8")
    except OSError as e:
        raise ReportIOError(str(path), e) from e


def write_report(report: MatrixReport, path: str | Path, fmt: str = "json"):
    if fmt == "json":
        write_text(to_canonical_json(report.to_dict()), path)
    elif fmt == "csv":
        write_text(matrix_csv(report.surrogates, report.victims, report.matrix), path)
    else:
        raise InputError(f"Unknown report format '{fmt}', expected json or csv")


def write_json(data: dict, path: str | Path):
    write_text(to_canonical_json(data), path)
