"""File formats: the iteration trace CSV, result JSON and density-curve CSV."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from gap.core import GapTrace, GaussianModel
from gap.errors import DimensionMismatch, InvalidSpec

__all__ = [
    "SCHEMA_VERSION",
    "load_model_json",
    "read_trace_csv",
    "trace_header",
    "write_density_curves",
    "write_json",
    "write_trace_csv",
]

SCHEMA_VERSION = "1.0"


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def trace_header(dim: int) -> list[str]:
    m = dim * (dim + 1) // 2
    return (["iter"] + [f"mu_{i}" for i in range(1, dim + 1)]
            + [f"l_{i}" for i in range(1, m + 1)] + ["overlap", "distance", "grad_norm"])


def write_trace_csv(trace: GapTrace, path: str | Path, dim: int) -> None:
    """One row per iteration with full double precision and LF line endings."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(trace_header(dim))
        for r in trace:
            w.writerow([str(r.iter)] + [_fmt(v) for v in r.mean] + [_fmt(v) for v in r.vech_chol]
                       + [_fmt(r.overlap), _fmt(r.distance), _fmt(r.grad_norm)])


def read_trace_csv(path: str | Path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float).reshape(-1, len(rows[0]))


def write_json(data: Mapping, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(data, fh, indent=2, sort_keys=False)
        fh.write("\n")


def write_density_curves(grid: np.ndarray, columns: Mapping[str, Iterable[float]], path: str | Path) -> None:
    """``x`` followed by one column per named density."""
    names = list(columns)
    values = [np.asarray(columns[n], dtype=float) for n in names]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x"] + names)
        for i, x in enumerate(grid):
            w.writerow([_fmt(x)] + [_fmt(v[i]) for v in values])


def load_model_json(path: str | Path) -> GaussianModel:
    """Read a Gaussian from ``{"mean": [...], "chol": [[...]]}``.

    A ``result.json`` also works: its ``gap`` block is used.
    """
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if isinstance(data, dict) and "mean" not in data and isinstance(data.get("gap"), dict):
        data = data["gap"]
    if not isinstance(data, dict) or "mean" not in data or "chol" not in data:
        raise InvalidSpec(f"{path}: expected an object with 'mean' and 'chol'")
    try:
        return GaussianModel.from_dict(data)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, DimensionMismatch):
            raise
        raise InvalidSpec(f"{path}: {exc}") from exc
