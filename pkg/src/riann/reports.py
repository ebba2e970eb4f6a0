"""Line-delimited run records and the figures rendered from them.

Every line is one JSON object carrying a ``record`` tag; files mix tags
freely.  Documented records:

- ``frame_stats``: t, total_rings, total_distance_evals, mean_candidates,
  temporal_change, queries, and optionally reconstruction_error /
  oracle_error.
- ``efficiency``: frames, queries, mean_distance_evals, brute_force_ratio,
  rings_change_spearman, frames_per_second.
- ``coherency``: samples, excluded, shift_median, residual_median,
  median_pairwise_ref_distance, shift_hist, shift_edges, residual_hist,
  residual_edges.

The plotting helpers consume these records and write PNG figures next to
the delimited output.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .engine import FrameStats
from .evaluation import CoherencyStats, EfficiencyReport


def frame_record(t: int, stats: FrameStats, **extra) -> dict:
    rec = {"record": "frame_stats", "t": t, **asdict(stats)}
    rec.update(extra)
    return rec


def efficiency_record(report: EfficiencyReport) -> dict:
    return {"record": "efficiency", **asdict(report)}


def coherency_record(
    stats: CoherencyStats, median_pairwise_ref_distance: float | None = None
) -> dict:
    def _median(arr: np.ndarray) -> float | None:
        return float(np.median(arr)) if arr.size else None

    return {
        "record": "coherency",
        "samples": stats.samples,
        "excluded": stats.excluded,
        "shift_median": _median(stats.shift_samples),
        "residual_median": _median(stats.residual_samples),
        "median_pairwise_ref_distance": median_pairwise_ref_distance,
        "shift_hist": stats.shift_hist.tolist(),
        "shift_edges": stats.shift_edges.tolist(),
        "residual_hist": stats.residual_hist.tolist(),
        "residual_edges": stats.residual_edges.tolist(),
    }


def write_records(path, records) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(rec, sort_keys=True) + "\n")


def read_records(path) -> list[dict]:
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def _frame_series(records: list[dict], key: str) -> tuple[list[int], list[float]]:
    ts, vals = [], []
    for rec in records:
        if rec.get("record") == "frame_stats" and rec.get(key) is not None:
            ts.append(rec["t"])
            vals.append(rec[key])
    return ts, vals


def plot_error_curve(records: list[dict], out_path) -> bool:
    """Reconstruction error over time, with the oracle curve when present."""
    ts, errs = _frame_series(records, "reconstruction_error")
    if not ts:
        return False
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ts, errs, marker="o", label="ring search")
    ots, oerrs = _frame_series(records, "oracle_error")
    if ots:
        ax.plot(ots, oerrs, marker="s", label="exact oracle")
    ax.set_xlabel("frame")
    ax.set_ylabel("relative reconstruction error")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
    return True


def plot_rings_vs_change(records: list[dict], out_path) -> bool:
    """Per-frame ring totals against temporal change (correlation view)."""
    ts, rings = _frame_series(records, "total_rings")
    _, change = _frame_series(records, "temporal_change")
    if not ts:
        return False
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax1.plot(ts, rings, marker="o", color="tab:blue", label="total rings")
    twin = ax1.twinx()
    twin.plot(ts, change, marker="s", color="tab:orange", label="temporal change")
    ax1.set_xlabel("frame")
    ax1.set_ylabel("total rings")
    twin.set_ylabel("temporal change")
    ax2.scatter(change, rings)
    ax2.set_xlabel("temporal change")
    ax2.set_ylabel("total rings")
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
    return True


def plot_coherency(records: list[dict], out_path) -> bool:
    """Histograms of match shift and predictor residual."""
    rec = next((r for r in records if r.get("record") == "coherency"), None)
    if rec is None or not rec["shift_hist"]:
        return False
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    for ax, hist_key, edges_key, label in (
        (ax1, "shift_hist", "shift_edges", "match shift distance"),
        (ax2, "residual_hist", "residual_edges", "predictor residual"),
    ):
        hist = rec[hist_key]
        edges = rec[edges_key]
        ax.bar(edges[:-1], hist, width=np.diff(edges), align="edge")
        ax.set_xlabel(label)
        ax.set_ylabel("count")
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
    return True


def render_figures(records: list[dict], out_dir) -> list[Path]:
    """Render every figure the records support; returns the files written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, fn in (
        ("error_curve.png", plot_error_curve),
        ("rings_vs_change.png", plot_rings_vs_change),
        ("coherency.png", plot_coherency),
    ):
        path = out / name
        if fn(records, path):
            written.append(path)
    return written
