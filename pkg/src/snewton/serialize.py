"""Deterministic report serialization.

All floats are written with 17 significant digits so that parsing a
report and re-serializing it reproduces the bytes exactly; the round-trip
property is part of the output contract.  Solve trajectories are JSON
lines (manifest, one record per iterate, summary); grid and field scans
are CSV with the manifest embedded as a '#' header line.
"""

from __future__ import annotations

import json
from typing import Any, Optional

import numpy as np

from .indicator import FieldScanResult
from .solver import GridCellResult, IterationRecord, TerminationReport

GRID_HEADER = "x0_1,x0_2,status,iters,final_1,final_2,dist_to_singular_line"
FIELD_HEADER = "x1,x2,g_value_or_tag,sigma_min_ratio"


def fmt_float(x: float) -> str:
    """17-significant-digit decimal form; exact under parse/re-format."""
    if not np.isfinite(x):
        raise ValueError(f"refusing to serialize non-finite value {x!r}")
    if x == 0.0:
        return "0"
    return format(float(x), ".17g")


def dumps(obj: Any) -> str:
    """Compact JSON with fmt_float for floats and insertion-ordered keys."""
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt_float(float(obj))
    if isinstance(obj, np.ndarray):
        return dumps(obj.tolist())
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(dumps(v) for v in obj) + "]"
    if isinstance(obj, dict):
        parts = (json.dumps(str(k)) + ":" + dumps(v) for k, v in obj.items())
        return "{" + ",".join(parts) + "}"
    raise TypeError(f"cannot serialize {type(obj)!r}")


def build_manifest(command: str, **fields: Any) -> dict:
    """The reproducibility header embedded verbatim in every output."""
    from . import __version__

    manifest: dict[str, Any] = {
        "type": "manifest",
        "tool": "snewton",
        "version": __version__,
        "command": command,
    }
    manifest.update(fields)
    return manifest


# ---------------------------------------------------------------------------
# solve trajectories: JSON lines
# ---------------------------------------------------------------------------


def _record_dict(rec: IterationRecord) -> dict:
    # Optional per-iterate quantities follow the "real or absent"
    # convention: a missing key means the quantity does not exist for
    # this iterate (e.g. no damping on the terminal record).
    out: dict[str, Any] = {
        "type": "record",
        "k": rec.k,
        "x": [float(v) for v in rec.x],
        "f_norm": rec.f_norm,
    }
    for key, value in (
        ("g_value", rec.g_value),
        ("g_case", rec.g_case),
        ("sigma_min_ratio", rec.sigma_min_ratio),
        ("lambda", rec.lam),
        ("rule_tag", rec.rule_tag),
        ("es_inner", rec.es_inner),
        ("as_norm", rec.as_norm),
    ):
        if value is not None:
            out[key] = value
    if rec.diagnostics is not None:
        d = rec.diagnostics
        diag: dict[str, Any] = {
            "sigma_n": d.sigma_n,
            "sigma_ratio": d.sigma_ratio,
            "grad_sigma_step": d.grad_sigma_step,
        }
        if d.predicted_lambda is not None:
            diag["predicted_lambda"] = d.predicted_lambda
        diag["as_lambda"] = d.as_lambda
        out["diagnostics"] = diag
    return out


def solve_report_lines(manifest: dict, report: TerminationReport) -> list[dict]:
    lines = [manifest]
    lines.extend(_record_dict(r) for r in report.records)
    summary: dict[str, Any] = {
        "type": "summary",
        "status": report.status.value,
        "final_x": [float(v) for v in report.final_x],
        "iterations": report.iterations,
    }
    if report.final_f_norm is not None:
        summary["final_f_norm"] = report.final_f_norm
    if report.quadratic_tail_ratio is not None:
        summary["quadratic_tail_ratio"] = report.quadratic_tail_ratio
    lines.append(summary)
    return lines


def jsonl_text(lines: list[dict]) -> str:
    return "".join(dumps(line) + "\n" for line in lines)


def parse_jsonl(text: str) -> list[dict]:
    return [json.loads(line) for line in text.splitlines() if line.strip()]


# ---------------------------------------------------------------------------
# grid runs: CSV
# ---------------------------------------------------------------------------


def _opt_float_cell(value: Optional[float]) -> str:
    return "" if value is None else fmt_float(value)


def grid_rows(results: list[GridCellResult]) -> list[dict]:
    return [
        {
            "x0_1": float(r.x0[0]),
            "x0_2": float(r.x0[1]),
            "status": r.status.value,
            "iters": int(r.iterations),
            "final_1": float(r.final_x[0]),
            "final_2": float(r.final_x[1]),
            "dist_to_singular_line": (
                None if r.dist_to_singular_line is None
                else float(r.dist_to_singular_line)
            ),
        }
        for r in results
    ]


def grid_csv_text(manifest: dict, rows: list[dict]) -> str:
    out = ["# " + dumps(manifest), GRID_HEADER]
    for row in rows:
        out.append(",".join([
            fmt_float(row["x0_1"]),
            fmt_float(row["x0_2"]),
            str(row["status"]),
            str(int(row["iters"])),
            fmt_float(row["final_1"]),
            fmt_float(row["final_2"]),
            _opt_float_cell(row["dist_to_singular_line"]),
        ]))
    return "\n".join(out) + "\n"


def parse_grid_csv(text: str) -> tuple[dict, list[dict]]:
    lines = text.splitlines()
    if len(lines) < 2 or not lines[0].startswith("# "):
        raise ValueError("missing manifest header")
    manifest = json.loads(lines[0][2:])
    if lines[1] != GRID_HEADER:
        raise ValueError("unexpected grid CSV header")
    rows = []
    for line in lines[2:]:
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != 7:
            raise ValueError(f"malformed grid row: {line!r}")
        rows.append({
            "x0_1": float(cells[0]),
            "x0_2": float(cells[1]),
            "status": cells[2],
            "iters": int(cells[3]),
            "final_1": float(cells[4]),
            "final_2": float(cells[5]),
            "dist_to_singular_line": None if cells[6] == "" else float(cells[6]),
        })
    return manifest, rows


# ---------------------------------------------------------------------------
# field scans: CSV
# ---------------------------------------------------------------------------


def field_rows(result: FieldScanResult) -> list[dict]:
    rows = []
    for cell in result.cells:
        rows.append({
            "x1": float(cell.x[0]),
            "x2": float(cell.x[1]),
            "g": None if cell.g_value is None else float(cell.g_value),
            "tag": cell.case_tag,
            "sigma_min_ratio": (
                None if cell.sigma_min_ratio is None
                else float(cell.sigma_min_ratio)
            ),
        })
    return rows


def field_csv_text(manifest: dict, rows: list[dict]) -> str:
    out = ["# " + dumps(manifest), FIELD_HEADER]
    for row in rows:
        g_cell = row["tag"] if row["g"] is None else fmt_float(row["g"])
        out.append(",".join([
            fmt_float(row["x1"]),
            fmt_float(row["x2"]),
            g_cell,
            _opt_float_cell(row["sigma_min_ratio"]),
        ]))
    return "\n".join(out) + "\n"


def _parse_field_g(cell: str) -> tuple[Optional[float], str]:
    try:
        return float(cell), "Regular"
    except ValueError:
        return None, cell


def parse_field_csv(text: str) -> tuple[dict, list[dict]]:
    lines = text.splitlines()
    if len(lines) < 2 or not lines[0].startswith("# "):
        raise ValueError("missing manifest header")
    manifest = json.loads(lines[0][2:])
    if lines[1] != FIELD_HEADER:
        raise ValueError("unexpected field CSV header")
    rows = []
    for line in lines[2:]:
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != 4:
            raise ValueError(f"malformed field row: {line!r}")
        g_val, tag = _parse_field_g(cells[2])
        rows.append({
            "x1": float(cells[0]),
            "x2": float(cells[1]),
            "g": g_val,
            "tag": tag,
            "sigma_min_ratio": None if cells[3] == "" else float(cells[3]),
        })
    return manifest, rows
