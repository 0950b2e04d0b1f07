"""CSV ingestion and report emission for the study drivers.

File formats are deliberately dumb: a curves file whose header row is
the grid and whose body rows are curves, a response file with one value
per line, a flat results table, and a JSON manifest that records enough
to rerun the study.  Floats are written with ``repr`` so a round trip
through disk is bit-identical.
"""

from __future__ import annotations

import json
import os
import platform
from datetime import datetime, timezone

import numpy as np

from ..core import Grid
from ..procsim import Dataset

__all__ = [
    "ParseError",
    "CSV_HEADER",
    "ingest_csv",
    "write_dataset_csv",
    "emit_outputs",
    "write_test_report_json",
]

CSV_HEADER = "scenario,d,n,M,reps,reject_pct,q0_pct,sec_per_rep"


class ParseError(ValueError):
    """Malformed input file; the message carries file and line number."""


def _parse_float(token: str, path: str, lineno: int, what: str) -> float:
    try:
        return float(token)
    except ValueError:
        raise ParseError(f"{path}:{lineno}: {what} is not a number: {token!r}") from None


def _read_lines(path: str) -> list[str]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read().splitlines()
    except OSError as exc:
        raise ParseError(f"{path}: cannot read file ({exc})") from None


def ingest_csv(curves_path: str, response_path: str) -> Dataset:
    """Read a curves file and a response file into a Dataset.

    The curves file starts with a header row holding the grid nodes
    (ascending, spanning [0, 1]); every following row is one curve
    observed at those nodes.  The response file holds one real per
    line, in the same order as the curve rows.
    """
    lines = [ln for ln in _read_lines(curves_path) if ln.strip()]
    if not lines:
        raise ParseError(f"{curves_path}:1: empty curves file")
    header = lines[0].split(",")
    nodes = np.array(
        [_parse_float(tok.strip(), curves_path, 1, "header node") for tok in header]
    )
    try:
        grid = Grid(nodes)
    except ValueError as exc:
        raise ParseError(f"{curves_path}:1: bad grid header: {exc}") from None

    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split(",")
        if len(fields) != grid.M:
            raise ParseError(
                f"{curves_path}:{lineno}: row has {len(fields)} values, expected {grid.M}"
            )
        rows.append(
            [_parse_float(tok.strip(), curves_path, lineno, "curve value") for tok in fields]
        )
    if len(rows) < 2:
        raise ParseError(f"{curves_path}: need at least 2 curve rows, got {len(rows)}")

    resp_lines = [ln for ln in _read_lines(response_path) if ln.strip()]
    if not resp_lines:
        raise ParseError(f"{response_path}:1: empty response file")
    responses = [
        _parse_float(ln.strip(), response_path, i, "response")
        for i, ln in enumerate(resp_lines, start=1)
    ]
    if len(responses) != len(rows):
        raise ParseError(
            f"{response_path}: {len(responses)} responses for {len(rows)} curves"
        )
    return Dataset(curves=np.array(rows), grid=grid, responses=np.array(responses))


def write_dataset_csv(dataset: Dataset, curves_path: str, response_path: str) -> None:
    """Write a dataset as an ingestible curves/response file pair."""
    with open(curves_path, "w", encoding="utf-8") as fh:
        fh.write(",".join(repr(float(t)) for t in dataset.grid.nodes) + "\n")
        for row in dataset.curves:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")
    with open(response_path, "w", encoding="utf-8") as fh:
        for y in dataset.responses:
            fh.write(repr(float(y)) + "\n")


def _versions() -> dict:
    import matplotlib
    import scipy

    try:
        from importlib.metadata import version

        own = version("flmcheck")
    except Exception:
        own = "unknown"
    return {
        "flmcheck": own,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "matplotlib": matplotlib.__version__,
        "python": platform.python_version(),
    }


def rows_to_csv(rows) -> str:
    """Render PowerRows as the flat results table (header + one line each)."""
    out = [CSV_HEADER]
    for r in rows:
        out.append(
            f"{r.scenario},{r.d},{r.n},{r.M},{r.replicates},"
            f"{r.reject_pct!r},{r.q0_pct!r},{r.sec_per_rep:.6f}"
        )
    return "\n".join(out) + "\n"


def emit_outputs(rows, figure_data, out_dir: str, config=None) -> dict[str, str]:
    """Write the results table, run manifest, and figures under out_dir.

    Returns a name -> path map of everything written.  ``figure_data``
    is the series bundle from the grid-size study (None for a plain
    power study); when present it is rendered both as static SVG line
    plots and as PNG panels.
    """
    if not rows:
        raise ValueError("emit_outputs needs at least one result row")
    from . import figures  # deferred: keeps matplotlib out of ingest-only paths

    os.makedirs(out_dir, exist_ok=True)
    written: dict[str, str] = {}

    table_path = os.path.join(out_dir, "results.csv")
    with open(table_path, "w", encoding="utf-8") as fh:
        fh.write(rows_to_csv(rows))
    written["table"] = table_path

    manifest = {
        "config": config.to_dict() if config is not None else None,
        "seed": None if config is None else config.seed,
        "rows": len(rows),
        "failures": {
            f"{r.scenario},d={r.d},n={r.n},M={r.M}": r.failures
            for r in rows
            if r.failures
        },
        "flagged_cells": [
            f"{r.scenario},d={r.d},n={r.n},M={r.M}" for r in rows if r.flagged
        ],
        "versions": _versions(),
        "created": datetime.now(timezone.utc).isoformat(),
    }
    manifest_path = os.path.join(out_dir, "manifest.json")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    written["manifest"] = manifest_path

    png_path = os.path.join(out_dir, "power.png")
    figures.render_power_png(rows, png_path)
    written["power_png"] = png_path

    if figure_data is not None:
        for name, path in figures.render_gridsize_files(figure_data, out_dir).items():
            written[name] = path
    return written


def write_test_report_json(report, alpha: float, path: str) -> None:
    """Serialize a single-test report (statistics, p-value, diagnostics)."""
    payload = {
        "T_n": report.T_n,
        "q_hat": report.q_hat,
        "V0": report.V0,
        "V1": report.V1,
        "gamma": report.gamma,
        "sigma_n2": report.sigma_n2,
        "p_value": report.p_value,
        "alpha": alpha,
        "reject": report.reject,
        "diagnostics": {k: v for k, v in report.diagnostics.items()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
