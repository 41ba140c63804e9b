"""Deterministic CSV and key=value text output."""
from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = ["format_value", "write_csv", "read_csv", "write_keyvalue", "format_keyvalue", "sha256_file"]


def format_value(x) -> str:
    # repr-level precision keeps files bit-reproducible and round-trippable
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    if isinstance(x, (np.integer,)):
        return str(int(x))
    if x is None:
        return ""
    return str(x)


def write_csv(path, header: Sequence[str], rows, footer: Mapping | None = None) -> Path:
    """Write ``rows`` (2-D array or iterable of rows) under ``header``.

    ``footer`` is appended as ``# key=value`` lines after the data.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    for row in np.atleast_2d(rows) if isinstance(rows, np.ndarray) else rows:
        lines.append(",".join(format_value(x) for x in row))
    if footer:
        lines += [f"# {k}={format_value(v)}" for k, v in footer.items()]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_csv(path) -> tuple[list[str], np.ndarray, dict[str, str]]:
    """Inverse of :func:`write_csv`: header, float data, footer dict."""
    header, rows, footer = None, [], {}
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            k, _, v = line[1:].strip().partition("=")
            footer[k] = v
        elif header is None:
            header = line.split(",")
        elif line:
            rows.append([float(x) if x else np.nan for x in line.split(",")])
    return header, np.array(rows, dtype=float).reshape(-1, len(header)), footer


def format_keyvalue(items: Mapping) -> str:
    return "".join(f"{k}={format_value(v)}\n" for k, v in items.items())


def write_keyvalue(path, items: Mapping) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_keyvalue(items))
    return path


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
