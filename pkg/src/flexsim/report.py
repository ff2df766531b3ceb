"""Versioned CSV and JSON report writers."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

SCHEMA_VERSION = 1


def schema_line(kind: str) -> str:
    return f"# flexsim {kind} schema={SCHEMA_VERSION}"


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    if hasattr(v, "label"):
        return v.label
    return str(v)


def write_csv(path, kind: str, columns: Sequence[str], rows: Iterable[dict]) -> None:
    """First line is the schema marker; then a header and one line per row."""
    with open(path, "w", newline="") as fh:
        fh.write(schema_line(kind) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(row.get(c, "")) for c in columns])


def read_csv(path) -> tuple:
    """Returns (schema line, rows as dicts of strings)."""
    with open(path, newline="") as fh:
        first = fh.readline().rstrip("\n")
        return first, list(csv.DictReader(fh))


def write_json(path, payload: dict) -> None:
    data = {"schema": SCHEMA_VERSION, **payload}
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True, default=_cell) + "\n")


LAYER_COLUMNS = ["layer", "mode", "m", "k", "n", "weight_sr", "input_sr", "prune", "a_format",
                 "b_format", "tiles", "compute_cycles", "distribution_cycles",
                 "reduction_cycles", "format_conversion_cycles", "dram_cycles", "total_cycles",
                 "rounds", "useful_products", "mac_utilization"]


def layer_rows(seq_report) -> list:
    rows = []
    for spec, (m, k, n), rep in seq_report.layers:
        row = rep.row()
        row.update(layer=spec.name, mode=rep.mode, m=m, k=k, n=n,
                   weight_sr=spec.weight_sr, input_sr=spec.input_sr, prune=spec.prune,
                   a_format=rep.tiles[0].a_format.label if rep.tiles else "",
                   b_format="/".join(sorted({t.b_format.label for t in rep.tiles})),
                   tiles=len(rep.tiles))
        rows.append(row)
    return rows


def report_columns(rows: Sequence[dict]) -> list:
    extra = sorted({k for r in rows for k in r} - set(LAYER_COLUMNS))
    return LAYER_COLUMNS + extra
