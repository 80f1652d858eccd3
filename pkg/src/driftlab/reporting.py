"""Deterministic CSV/JSON emission shared by the scenario runner.

CSV files are RFC-4180 (CRLF, header row) with floats at 12 significant
digits; reruns with identical inputs produce byte-identical bodies. JSON
summaries are key-sorted for the same reason; anything nondeterministic
(timestamps) belongs in the sidecar metadata file, never here.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".12g")
    return str(value)


def write_csv(path: Path, header: list[str], rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    return path


def write_json(path: Path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    def default(obj):
        if isinstance(obj, (np.integer,)):
            return int(obj)
        if isinstance(obj, (np.floating,)):
            return float(obj)
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        raise TypeError(f"not JSON serializable: {type(obj)}")

    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=default)
        fh.write("\n")
    return path


def vector_header(prefix: str, d: int) -> list[str]:
    if d == 1:
        return [prefix]
    return [f"{prefix}_{i + 1}" for i in range(d)]


def matrix_header(prefix: str, d: int) -> list[str]:
    if d == 1:
        return [prefix]
    return [f"{prefix}_{i + 1}{j + 1}" for i in range(d) for j in range(d)]
