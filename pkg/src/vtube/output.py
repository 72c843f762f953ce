"""Run artifacts: trajectory CSV, event stream, metrics, manifest and plot data.

Floats in the trajectory are written with ``repr`` so a file round-trips
to the exact doubles and two identical runs give identical bytes.
Non-finite metric values (e.g. the minimum pair distance of a one-UAV
run) are written as JSON ``null``.
"""

from __future__ import annotations

import csv
import json
import math
import platform
import subprocess
from pathlib import Path

import numpy as np

from . import __version__
from .scenario import MANIFEST_ID
from .simulation import TRAJECTORY_COLUMNS, RunRecord

PLOT_DISTANCE_COLUMNS = ("t", "min_p_distance", "min_xi_distance", "tube_margin_p",
                         "tube_margin_xi", "total_v", "ref_2rs", "ref_rs")


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _finite(obj):
    """Copy of ``obj`` with non-finite floats replaced by ``None``."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def write_trajectory(path: Path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_COLUMNS)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def write_events(path: Path, events) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for e in events:
            fh.write(json.dumps(_finite(e.as_dict())) + "\n")


def write_json(path: Path, doc) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_finite(doc), fh, indent=2)
        fh.write("\n")


def git_revision() -> str | None:
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"], capture_output=True, text=True,
                             cwd=Path(__file__).parent, timeout=5)
    except (OSError, subprocess.SubprocessError):
        return None
    return out.stdout.strip() or None if out.returncode == 0 else None


def manifest(resolved: dict, threads: int) -> dict:
    return {
        "schema": MANIFEST_ID,
        "version": __version__,
        "git": git_revision(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "dt": resolved["sim"]["dt"],
        "integrator": resolved["sim"]["integrator"],
        "threads": threads,
        "scenario": resolved,
    }


def plot_distance_rows(record: RunRecord, every: int):
    tr = record.trace
    n = len(tr["t"])
    keep = sorted(set(range(0, n, every)) | {n - 1}) if n else []
    r_s = record.params.r_s
    for k in keep:
        yield (float(tr["t"][k]), float(tr["min_p_distance"][k]), float(tr["min_xi_distance"][k]),
               float(tr["tube_margin_p"][k]), float(tr["tube_margin_xi"][k]),
               float(tr["total_v"][k]), 2.0 * r_s, r_s)


def plot_position_rows(rows, every_seconds: float):
    """Position snapshots at multiples of ``every_seconds`` plus the final time."""
    if not rows:
        return []
    times = sorted({r[0] for r in rows})
    marks = [t for t in times if abs(t / every_seconds - round(t / every_seconds)) < 1e-9]
    wanted = set(marks) | {times[-1]}
    return [(r[0], r[1], r[2], r[3], r[10]) for r in rows if r[0] in wanted]


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def write_bundle(out_dir: Path, record: RunRecord, summary: dict, resolved: dict,
                 threads: int, snapshot_seconds: float = 20.0) -> dict:
    """Write every artifact of a run into ``out_dir``; returns the paths written."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "trajectory": out_dir / "trajectory.csv",
        "events": out_dir / "events.jsonl",
        "metrics": out_dir / "metrics.json",
        "manifest": out_dir / "manifest.json",
        "plot_min_distance": out_dir / "plot_min_distance.csv",
        "plot_positions": out_dir / "plot_positions.csv",
    }
    write_trajectory(paths["trajectory"], record.rows)
    write_events(paths["events"], record.events)
    write_json(paths["metrics"], summary)
    write_json(paths["manifest"], manifest(resolved, threads))
    every = record.settings.record_every
    write_csv(paths["plot_min_distance"], PLOT_DISTANCE_COLUMNS, plot_distance_rows(record, every))
    write_csv(paths["plot_positions"], ("t", "id", "px", "py", "region"),
              plot_position_rows(record.rows, snapshot_seconds))
    return paths
