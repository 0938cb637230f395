"""Tabular views of a run and atomic CSV/JSON writers.

Column orders are fixed here and documented in the README. Floats are
written with ``repr`` (shortest round-trip form), missing values as empty
cells and booleans as ``true``/``false``, so identical runs produce
byte-identical files.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Sequence

from .pipeline import EstimateRecord, RunResult

__all__ = [
    "RESULT_COLUMNS",
    "SPECTRUM_COLUMNS",
    "AM_TRACK_COLUMNS",
    "SWEEP_COLUMNS",
    "result_row",
    "result_rows",
    "spectrum_rows",
    "am_track_rows",
    "sweep_rows",
    "run_report",
    "format_cell",
    "write_csv",
    "write_json",
    "write_run",
]

RESULT_COLUMNS = (
    "track_id",
    "target_id",
    "cycle",
    "n_samples",
    "d0_m",
    "delta_d_m",
    "true_height_m",
    "estimated_height_m",
    "apparent_height_m",
    "error_m",
    "resolution_m",
    "valid",
    "valid_lower_bound",
    "valid_dc_limit",
    "retroreflector_corrected",
    "method",
)
SPECTRUM_COLUMNS = ("track_id", "cycle", "height_m", "psd")
AM_TRACK_COLUMNS = ("track_id", "cycle", "sample", "distance_m", "raw_amplitude", "preprocessed_amplitude")
SWEEP_COLUMNS = (
    "value",
    "target_id",
    "track_id",
    "cycle",
    "true_height_m",
    "estimated_height_m",
    "error_m",
    "resolution_m",
    "valid",
)


def _error(record: EstimateRecord) -> float:
    return record.estimate.height - record.true_height if record.target_id is not None else math.nan


def result_row(r: EstimateRecord) -> tuple:
    e = r.estimate
    return (
        r.track_id,
        r.target_id,
        r.cycle,
        len(r.raw_track),
        e.d0,
        e.delta_d,
        r.true_height,
        e.height,
        e.apparent_height,
        _error(r),
        e.resolution,
        e.valid,
        e.valid_lower_bound,
        e.valid_dc_limit,
        e.retroreflector_corrected,
        r.method.value,
    )


def result_rows(result: RunResult) -> list[tuple]:
    return [result_row(r) for r in result.records]


def spectrum_rows(result: RunResult) -> list[tuple]:
    rows = []
    for r in result.records:
        for h, p in zip(r.spectrum.heights, r.spectrum.psd):
            rows.append((r.track_id, r.cycle, float(h), float(p)))
    return rows


def am_track_rows(result: RunResult) -> list[tuple]:
    rows = []
    for r in result.records:
        raw, pre = r.raw_track, r.processed_track
        for n, (d, a, b) in enumerate(zip(raw.distances, raw.amplitudes, pre.amplitudes)):
            rows.append((r.track_id, r.cycle, n, float(d), float(a), float(b)))
    return rows


def sweep_rows(value: str, result: RunResult) -> list[tuple]:
    """Aggregate rows of one sweep point; a point without estimates keeps one empty row."""
    rows = []
    for r in result.records:
        if r.target_id is None:
            continue
        rows.append(
            (value, r.target_id, r.track_id, r.cycle, r.true_height, r.estimate.height, _error(r),
             r.estimate.resolution, r.estimate.valid)
        )
    if not rows:
        rows.append((value,) + (None,) * (len(SWEEP_COLUMNS) - 1))
    return rows


def run_report(result: RunResult, scenario: dict[str, Any] | None = None) -> dict[str, Any]:
    """Per-track estimates with ground truth, skipped tracks and timings."""
    estimates = [
        dict(zip(RESULT_COLUMNS, (_json_value(v) for v in result_row(r)))) for r in result.records
    ]
    return {
        "scenario": scenario,
        "sampling_mode": result.mode.value,
        "n_cycles": result.n_cycles,
        "n_tracks": len(result.tracks),
        "n_estimates": len(result.records),
        "estimates": estimates,
        "skipped": [{"track_id": tid, "reason": why} for tid, why in result.skipped],
        "timings_s": result.timings,
    }


def _json_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def format_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: str | Path, columns: Sequence[str], rows: Iterable[Sequence]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_cell(v) for v in row])
    _atomic_write(Path(path), buf.getvalue())


def write_json(path: str | Path, data: Any) -> None:
    _atomic_write(Path(path), json.dumps(data, indent=2, sort_keys=False, allow_nan=False) + "\n")


def write_run(out_dir: str | Path, result: RunResult, scenario: dict[str, Any] | None = None) -> dict[str, Path]:
    out = Path(out_dir)
    paths = {
        "results": out / "results.csv",
        "spectra": out / "spectra.csv",
        "am_tracks": out / "am_tracks.csv",
        "report": out / "report.json",
    }
    write_csv(paths["results"], RESULT_COLUMNS, result_rows(result))
    write_csv(paths["spectra"], SPECTRUM_COLUMNS, spectrum_rows(result))
    write_csv(paths["am_tracks"], AM_TRACK_COLUMNS, am_track_rows(result))
    write_json(paths["report"], run_report(result, scenario))
    return paths
