"""Static report artifacts: JSON documents, trace tables, text tables, plots."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from lanesim.simloop import TRACE_COLUMNS, AutonomyReport, SequenceResult


def write_json(obj, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")
    return path


def write_trace(result: SequenceResult, path) -> Path:
    """Per-frame trace table (CSV, floats in repr form)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=TRACE_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in result.trace_rows():
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return path


def read_trace(path) -> dict[str, np.ndarray]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {col: np.array([float(r[col]) for r in rows]) for col in TRACE_COLUMNS}


def format_table(reports: Mapping[str, dict | AutonomyReport], scenarios: Sequence[str] | None = None) -> str:
    """Controllers as rows, scenarios as columns: ``autonomy % / MAD cm``.

    ``reports`` maps a controller name to a report (object or its dict).
    """
    docs = {name: (r.to_dict() if isinstance(r, AutonomyReport) else r) for name, r in reports.items()}
    if scenarios is None:
        scenarios = sorted({lab for d in docs.values() for lab in d.get("scenarios", {})})
    header = ["controller"] + [f"{lab} a% / MAD cm" for lab in scenarios] + ["overall a% / MAD cm"]
    rows = []
    for name in sorted(docs):
        d = docs[name]
        cells = [name]
        for lab in scenarios:
            sc = d.get("scenarios", {}).get(lab)
            cells.append(_cell(sc))
        cells.append(_cell(d.get("overall")))
        rows.append(cells)
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in rows]
    return "\n".join(lines) + "\n"


def _cell(sc) -> str:
    if sc is None:
        return "-"
    flag = "*" if sc.get("flagged") else ""
    return f"{sc['autonomy_pct']:.1f}{flag} / {sc['mad_cm']:.1f}"


def format_sweep(rows) -> str:
    lines = ["rank  params  autonomy%  MAD cm  R  error"]
    for i, row in enumerate(rows, 1):
        d = row.to_dict() if hasattr(row, "to_dict") else row
        params = json.dumps(d["params"], sort_keys=True)
        sc = d["score"]
        if sc is None:
            lines.append(f"{i}  {params}  -  -  -  {d['error']}")
        else:
            lines.append(f"{i}  {params}  {sc['autonomy_pct']:.2f}  {sc['mad_cm']:.2f}  {sc['recoveries']}  ")
    return "\n".join(lines) + "\n"


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_offset(trace: Mapping[str, np.ndarray], dt: float, path, title: str = "") -> Path:
    """|offset| over time with recovery markers."""
    plt = _pyplot()
    t = trace["frame"] * dt
    fig, ax = plt.subplots(figsize=(8, 3))
    ax.plot(t, trace["de"], lw=0.8, color="tab:red", label="|lateral offset|")
    rec = trace["recovery"] > 0
    if rec.any():
        ax.plot(t[rec], np.zeros(rec.sum()), "kv", ms=6, label="recovery")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("m")
    ax.set_title(title)
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return Path(path)


def plot_trajectory(trace: Mapping[str, np.ndarray], path, title: str = "") -> Path:
    """Human trajectory in blue, simulated vehicle in red."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 6))
    ax.plot(trace["human_x"], trace["human_y"], color="tab:blue", lw=1.0, label="human")
    ax.plot(trace["net_x"], trace["net_y"], color="tab:red", lw=0.8, label="controller")
    rec = trace["recovery"] > 0
    if rec.any():
        ax.plot(trace["human_x"][rec], trace["human_y"][rec], "kx", ms=5, label="recovery")
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return Path(path)
