"""Rendering of run artifacts: figures, tables, and machine outputs.

Everything written here is deterministic for a fixed input so batch
runs can be compared byte for byte.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .segmentation import SegmentationResult  # noqa: E402

METRIC_COLUMNS = ("scenario", "variant", "seed", "n_actions",
                  "n_candidates", "n_plan", "n_task", "exec")

_KIND_COLORS = {
    "Contact": "#4878cf",
    "Support": "#6acc65",
    "Containment": "#d65f5f",
    "Grasp": "#b47cc7",
}


def render_timeline(seg: SegmentationResult, path) -> None:
    """Bars for every situation over time, with action boundaries."""
    rows = sorted(seg.situations,
                  key=lambda s: (s.kind, s.participants, s.t_start))
    fig, ax = plt.subplots(figsize=(9, max(2.0, 0.45 * len(rows) + 1.2)))
    labels = []
    for i, s in enumerate(rows):
        ax.barh(i, s.t_end - s.t_start, left=s.t_start, height=0.6,
                color=_KIND_COLORS.get(s.kind, "#888888"))
        labels.append(f"{s.kind}({', '.join(s.participants)})")
    for t in seg.boundaries:
        ax.axvline(t, color="#444444", linewidth=0.8, linestyle="--")
    ax.set_yticks(range(len(rows)))
    ax.set_yticklabels(labels, fontsize=8)
    ax.set_xlabel("time [s]")
    ax.set_xlim(seg.t0, seg.t_end)
    ax.invert_yaxis()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_metrics(rows: list[dict], path) -> None:
    """Grouped bars of candidate, plan, and verified-task counts."""
    fig, ax = plt.subplots(figsize=(max(6.0, 0.5 * len(rows) + 2.0), 3.5))
    xs = range(len(rows))
    w = 0.27
    for off, key, color in ((-w, "n_candidates", "#4878cf"),
                            (0.0, "n_plan", "#6acc65"),
                            (w, "n_task", "#b47cc7")):
        ax.bar([x + off for x in xs], [r[key] for r in rows], width=w,
               color=color, label=key)
    ax.set_xticks(list(xs))
    ax.set_xticklabels(
        [f"{r['scenario'][:6]}-{r['variant']}-{r['seed']}" for r in rows],
        rotation=60, ha="right", fontsize=7)
    ax.set_ylabel("count")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def metrics_table(rows: list[dict]) -> str:
    """Fixed-width text table of per-demo counts."""
    header = list(METRIC_COLUMNS)
    cells = [[str(r[c]) for c in header] for r in rows]
    widths = [max(len(h), *(len(row[i]) for row in cells)) if cells
              else len(h) for i, h in enumerate(header)]
    def fmt(row):
        return "  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip()
    lines = [fmt(header), fmt(["-" * w for w in widths])]
    lines.extend(fmt(row) for row in cells)
    return "\n".join(lines) + "\n"


def write_metrics_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({c: r[c] for c in METRIC_COLUMNS})


def write_situations(seg: SegmentationResult, path) -> None:
    data = {
        "t0": seg.t0,
        "t_end": seg.t_end,
        "boundaries": list(seg.boundaries),
        "actions": [[a.t_start, a.t_end] for a in seg.actions],
        "situations": [
            {"kind": s.kind, "participants": list(s.participants),
             "t_start": s.t_start, "t_end": s.t_end}
            for s in sorted(seg.situations,
                            key=lambda s: (s.kind, s.participants,
                                           s.t_start))],
    }
    Path(path).write_text(json.dumps(data, indent=2) + "\n")


def write_candidates(records: list[dict], path) -> None:
    Path(path).write_text(json.dumps(records, indent=2) + "\n")


def write_trace(trace: list[dict], path) -> None:
    with open(path, "w") as fh:
        for row in trace:
            fh.write(json.dumps(row) + "\n")


def summarize(rows: list[dict], rejected: list[str]) -> str:
    lines = [metrics_table(rows)]
    if rows:
        n = len(rows)
        done = sum(1 for r in rows if r["n_task"] >= 1)
        cands = sorted(r["n_candidates"] for r in rows)
        mid = cands[len(cands) // 2] if n % 2 else \
            0.5 * (cands[n // 2 - 1] + cands[n // 2])
        lines.append(f"demos: {n}  with verified task: {done}  "
                     f"median candidates: {mid:g}")
    if rejected:
        lines.append(f"rejected: {len(rejected)} "
                     f"({', '.join(rejected)})")
    return "\n".join(lines) + "\n"
