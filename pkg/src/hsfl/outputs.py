"""Deterministic JSON/CSV writers with fixed column schemas."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .orchestrator import TRACE_COLUMNS

CHANNEL_COLUMNS = ("round", "device", "h_broadcast", "h_uplink", "h_downlink")
SWEEP_COLUMNS = (
    "rho1",
    "rho2_index",
    "rho2",
    "rounds",
    "rounds_to_target",
    "cumulative_delay",
    "mean_K_S",
    "mean_total_batch",
    "mean_t_round",
)
SUMMARY_COLUMNS = ("seed", "scheme", "rounds", "rounds_to_target", "cumulative_delay", "final_loss")


class SchemaError(ValueError):
    pass


def fmt(value) -> str:
    """Floats at 12 significant digits; ints and strings verbatim; None as empty."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "nan" if math.isnan(value) else f"{float(value):.12g}"
    return str(value)


def _to_jsonable(obj):
    if isinstance(obj, dict):
        return {k: _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _to_jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return float(f"{v:.12g}") if math.isfinite(v) else None
    return obj


def write_json(path: Path, payload) -> None:
    Path(path).write_text(json.dumps(_to_jsonable(payload), indent=2, sort_keys=True) + "\n")


def write_csv(path: Path, columns, rows) -> None:
    """Write rows after checking every one carries exactly ``columns``."""
    columns = tuple(columns)
    for i, row in enumerate(rows):
        if tuple(row.keys()) != columns and set(row.keys()) != set(columns):
            raise SchemaError(f"row {i} has columns {sorted(row)} instead of {list(columns)}")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(row[c]) for c in columns])


def trace_rows(result) -> list[dict]:
    return [{c: r[c] for c in TRACE_COLUMNS} for r in result.rows]


def channel_rows(result) -> list[dict]:
    rows = []
    for t, draw in result.channels:
        for k in range(len(draw.h_uplink)):
            rows.append(
                {
                    "round": t,
                    "device": k,
                    "h_broadcast": draw.h_broadcast[k],
                    "h_uplink": draw.h_uplink[k],
                    "h_downlink": draw.h_downlink[k],
                }
            )
    return rows
