"""On-disk formats: trace CSV and the dynamic-range report JSON."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, OxpixError
from .experiments import DrReport
from .solver import TransientTrace

CSV_HEADER = "t_s,vpd_V,i_ox_A,gap_nm,event"
REPORT_SCHEMA = 1


def write_trace_csv(trace: TransientTrace, path: str) -> None:
    """One row per sample; 17 significant digits so values round-trip
    bitwise.  The event column holds the event kind at its first sample at
    or after the event time, otherwise it is empty.  The file descriptor is
    flushed and fsynced before close.
    """
    labels = [""] * len(trace.t)
    for event in trace.events:
        idx = int(np.searchsorted(trace.t, event.t_event, side="left"))
        idx = min(idx, len(labels) - 1)
        while labels[idx]:
            idx += 1
            if idx >= len(labels):
                idx = len(labels) - 1
                break
        labels[idx] = event.kind.value
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(CSV_HEADER + "\n")
            for t, v, i, g, label in zip(trace.t, trace.vpd, trace.i_ox,
                                         trace.gap, labels):
                fh.write(f"{t:.16e},{v:.16e},{i:.16e},{g:.16e},{label}\n")
            fh.flush()
            os.fsync(fh.fileno())
    except OSError as exc:
        raise OxpixError(f"cannot write trace to {path!r}: {exc}") from exc


@dataclass
class TraceFile:
    t: np.ndarray
    vpd: np.ndarray
    i_ox: np.ndarray
    gap: np.ndarray
    events: list[tuple[float, str]]


def read_trace_csv(path: str) -> TraceFile:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n")
            if header != CSV_HEADER:
                raise ConfigError(
                    f"{path}: unexpected header {header!r}")
            cols = ([], [], [], [])
            events = []
            for no, line in enumerate(fh, start=2):
                parts = line.rstrip("\n").split(",")
                if len(parts) != 5:
                    raise ConfigError(f"{path}:{no}: expected 5 columns")
                for col, text in zip(cols, parts[:4]):
                    col.append(float(text))
                if parts[4]:
                    events.append((cols[0][-1], parts[4]))
    except OSError as exc:
        raise OxpixError(f"cannot read trace from {path!r}: {exc}") from exc
    return TraceFile(*(np.asarray(c) for c in cols), events=events)


def report_row(report: DrReport, residuals: Optional[dict] = None) -> dict:
    return {
        "i_exp_min_A": report.i_exp_min,
        "i_exp_max_A": report.i_exp_max,
        "operating_dr_db": report.operating_dr_db,
        "relative_improvement_db": report.relative_improvement_db,
        "events_summary": dict(sorted(report.events_summary.items())),
        "calibration_residuals": residuals or {},
    }


def write_report_json(reports: dict[str, DrReport], residuals: dict,
                      path: str) -> None:
    payload = {"schema": REPORT_SCHEMA}
    for label in ("baseline", "case_i", "case_ii", "case_iii"):
        if label in reports:
            payload[label] = report_row(reports[label], residuals)
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
            fh.flush()
            os.fsync(fh.fileno())
    except OSError as exc:
        raise OxpixError(f"cannot write report to {path!r}: {exc}") from exc


def write_sweep_csv(rows, path: str) -> None:
    """Per-point sweep table: exposure, final level, swing, events."""
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("i_exp_A,final_vpd_V,swing_V,events,error\n")
            for r in rows:
                events = ";".join(r.events)
                err = r.error or ""
                fh.write(f"{r.i_exp:.16e},{r.final_vpd:.16e},"
                         f"{r.swing:.16e},{events},{err}\n")
            fh.flush()
            os.fsync(fh.fileno())
    except OSError as exc:
        raise OxpixError(f"cannot write sweep to {path!r}: {exc}") from exc
