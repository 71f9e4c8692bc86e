"""Report rendering: metrics CSV plus matplotlib figures for a run directory.

Figures land next to the delimited output so a run can be inspected without
re-executing anything: presence/occlusion timeline, jitter before vs after
smoothing, batch utilization, and raw-vs-smoothed pose traces.
"""

from __future__ import annotations

import csv
import os
from typing import Optional

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from . import files

FIGURES_DIR = "figures"
REPORT_CSV = "report.csv"


def load_run(run_dir: str) -> dict:
    data = {"report": files.read_json(os.path.join(run_dir, files.REPORT_FILE))}
    final_path = os.path.join(run_dir, files.TRAJECTORIES_FILE)
    raw_path = os.path.join(run_dir, files.RAW_TRAJECTORIES_FILE)
    data["trajectories"] = files.load_trajectories(final_path) if os.path.exists(final_path) else None
    data["raw"] = files.load_trajectories(raw_path) if os.path.exists(raw_path) else None
    return data


def write_report_csv(run_dir: str, out_path: str) -> list[dict]:
    """Per-human summary rows; the delimited counterpart of report.json."""
    report = files.read_json(os.path.join(run_dir, files.REPORT_FILE))
    occl = {h["id"]: h for h in report.get("occlusion", [])}
    presence: dict[str, int] = {}
    traj = load_run(run_dir)["trajectories"]
    if traj is not None:
        for t in traj[0]:
            presence[t.human_id] = len(t.present_frames())
    rows = []
    for human_id, jit in sorted(report.get("jitter", {}).items()):
        h_occl = occl.get(human_id, {})
        before, after = jit.get("before"), jit.get("after")
        reduction = None
        if before and after is not None and before > 0:
            reduction = 100.0 * (1.0 - after / before)
        rows.append(
            {
                "human_id": human_id,
                "present_frames": presence.get(human_id, ""),
                "flagged_frames": len(h_occl.get("flagged_frames", [])),
                "occlusion_intervals": len(h_occl.get("intervals", [])),
                "jitter_before": "" if before is None else repr(before),
                "jitter_after": "" if after is None else repr(after),
                "jitter_reduction_pct": "" if reduction is None else f"{reduction:.2f}",
            }
        )
    fieldnames = [
        "human_id",
        "present_frames",
        "flagged_frames",
        "occlusion_intervals",
        "jitter_before",
        "jitter_after",
        "jitter_reduction_pct",
    ]
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)
    return rows


def render_run_figures(run_dir: str, out_dir: Optional[str] = None) -> list[str]:
    """Render all figures for a run; returns the written paths."""
    out_dir = out_dir or os.path.join(run_dir, FIGURES_DIR)
    os.makedirs(out_dir, exist_ok=True)
    data = load_run(run_dir)
    report = data["report"]
    written = []
    written.append(_timeline_figure(report, data, os.path.join(out_dir, "timeline.png")))
    written.append(_jitter_figure(report, os.path.join(out_dir, "jitter.png")))
    written.append(_utilization_figure(report, os.path.join(out_dir, "batch_utilization.png")))
    trace = _trace_figure(data, os.path.join(out_dir, "pose_traces.png"))
    if trace:
        written.append(trace)
    return [w for w in written if w]


def _timeline_figure(report, data, path) -> Optional[str]:
    traj = data["trajectories"]
    if traj is None:
        return None
    trajectories, frame_count = traj[0], traj[1]
    occl = {h["id"]: h for h in report.get("occlusion", [])}
    fig, ax = plt.subplots(figsize=(8, 1.0 + 0.6 * max(1, len(trajectories))))
    labels = []
    for row, t in enumerate(trajectories):
        labels.append(t.human_id)
        present = t.present_frames()
        if present:
            ax.broken_barh(
                [(p + 1, 1) for p in present], (row - 0.3, 0.6), color="#74a9cf", label=None
            )
        for s, e in occl.get(t.human_id, {}).get("intervals", []):
            ax.broken_barh([(s, e - s + 1)], (row - 0.3, 0.6), color="none", edgecolor="#d95f02", linewidth=1.5)
        flagged = occl.get(t.human_id, {}).get("flagged_frames", [])
        if flagged:
            ax.plot(flagged, [row] * len(flagged), "x", color="#d95f02", markersize=5)
    ax.set_yticks(range(len(labels)))
    ax.set_yticklabels(labels)
    ax.set_xlim(0.5, frame_count + 0.5)
    ax.set_xlabel("frame")
    ax.set_title("presence and occlusion intervals")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def _jitter_figure(report, path) -> Optional[str]:
    jitter = report.get("jitter", {})
    ids = [h for h in sorted(jitter) if jitter[h]["before"] is not None]
    if not ids:
        return None
    before = [jitter[h]["before"] for h in ids]
    after = [jitter[h]["after"] for h in ids]
    x = range(len(ids))
    fig, ax = plt.subplots(figsize=(6, 3.2))
    ax.bar([i - 0.18 for i in x], before, width=0.36, label="before", color="#a6bddb")
    ax.bar([i + 0.18 for i in x], after, width=0.36, label="after", color="#2b8cbe")
    ax.set_xticks(list(x))
    ax.set_xticklabels(ids)
    ax.set_ylabel("mean first-difference norm")
    ax.set_title("pose+hands jitter before/after smoothing")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def _utilization_figure(report, path) -> Optional[str]:
    detail = report.get("hmr", {}).get("chunk_detail", [])
    if not detail:
        return None
    x = range(len(detail))
    valid = [c["valid"] for c in detail]
    padded = [c["frames"] * c["width"] - c["valid"] for c in detail]
    fig, ax = plt.subplots(figsize=(6, 3.2))
    ax.bar(x, valid, label="valid slots", color="#2b8cbe")
    ax.bar(x, padded, bottom=valid, label="padding", color="#ece7f2", edgecolor="#999")
    ax.set_xticks(list(x))
    ax.set_xticklabels([f"chunk {i}" for i in x])
    ax.set_ylabel("slots")
    ax.set_title(
        f"batch utilization ({report['hmr']['chunks']} calls vs "
        f"{report['hmr']['sequential_calls']} sequential)"
    )
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def _trace_figure(data, path) -> Optional[str]:
    if data["raw"] is None or data["trajectories"] is None:
        return None
    raw_list, smooth_list = data["raw"][0], data["trajectories"][0]
    pick = None
    for raw, smooth in zip(raw_list, smooth_list):
        if len(raw.present_frames()) >= 2:
            pick = (raw, smooth)
            break
    if pick is None:
        return None
    raw, smooth = pick
    channels = min(3, raw.layout.pose_dim)
    fig, axes = plt.subplots(channels, 1, figsize=(7, 2.0 * channels), sharex=True)
    if channels == 1:
        axes = [axes]
    frames = raw.present_frames()
    for ch, ax in enumerate(axes):
        ax.plot(
            [t + 1 for t in frames],
            [raw.params[t].pose[ch] for t in frames],
            ".-",
            color="#bbb",
            label="raw",
        )
        ax.plot(
            [t + 1 for t in frames],
            [smooth.params[t].pose[ch] for t in frames],
            ".-",
            color="#2b8cbe",
            label="smoothed",
        )
        ax.set_ylabel(f"pose[{ch}]")
    axes[0].set_title(f"pose channels, human {raw.human_id!r}")
    axes[0].legend(loc="upper right")
    axes[-1].set_xlabel("frame")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path
