"""Trajectory and report serialization.

CSV: fixed column order (t first, s second), one row per sample, decimal
floats at 17 significant digits so parsing reproduces every float64 bit
exactly.  Absent quantities are empty cells, never zeros.
"""

from __future__ import annotations

import csv
import hashlib
import json

from .model import CSV_COLUMNS, MonitorRecord, Trajectory


def _fmt(v) -> str:
    if v is None:
        return ""
    return format(float(v), ".17g")


def _parse(s: str):
    return None if s == "" else float(s)


def write_trajectory_csv(traj: Trajectory, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for rec in traj.records:
            w.writerow([_fmt(getattr(rec, c)) for c in CSV_COLUMNS])


def read_trajectory_csv(path) -> Trajectory:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV header: {header}")
        records = []
        for row in r:
            kw = {c: _parse(v) for c, v in zip(CSV_COLUMNS, row)}
            records.append(MonitorRecord(**kw))
    normalized = all(rec.s is None for rec in records)
    return Trajectory(records=records, normalized=normalized)


def config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def write_summary_json(summary: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
