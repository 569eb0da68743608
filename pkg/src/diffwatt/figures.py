"""Figure rendering for the report path.

All figures go to files (headless Agg backend); the CLI writes them next to
the delimited findings table.
"""

from __future__ import annotations

import os
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .detect import Report
from .energy import ground_truth_signal
from .trace_model import Trace

_VERDICT_COLORS = {"waste": "#c0392b", "tradeoff": "#e67e22", "below_threshold": "#7f8c8d"}


def render_energy_comparison(report: Report, path: str) -> str:
    """Paired horizontal bars: per-segment energy of both systems."""
    findings = list(report.findings)
    labels = [
        "+".join(f.pair.nodes_a) or "-" for f in findings
    ]
    fig, ax = plt.subplots(figsize=(8, max(2.0, 0.55 * len(findings) + 1.2)))
    ys = range(len(findings))
    ax.barh([y + 0.2 for y in ys], [f.energy_a for f in findings], height=0.38,
            label="system A", color="#2e86c1")
    ax.barh([y - 0.2 for y in ys], [f.energy_b for f in findings], height=0.38,
            label="system B", color="#f4a940")
    for y, f in zip(ys, findings):
        if f.verdict == "waste":
            ax.text(max(f.energy_a, f.energy_b) * 1.01, y,
                    f"waste {f.wasted_joules:.2f} J ({f.category})",
                    va="center", fontsize=8, color=_VERDICT_COLORS["waste"])
    ax.set_yticks(list(ys))
    ax.set_yticklabels(labels, fontsize=8)
    ax.invert_yaxis()
    ax.set_xlabel("segment energy [J]")
    ax.set_title(
        f"segment energy, method={report.method} "
        f"(waste: {report.wasted_joules:.2f} J, "
        f"{100 * report.end_to_end_waste_pct:.1f}%)"
    )
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_power_timeline(trace_a: Trace, trace_b: Trace, path: str) -> str:
    """Ground-truth power of both traces as step curves."""
    fig, axes = plt.subplots(2, 1, figsize=(9, 5), sharex=False)
    for ax, trace, label, color in (
        (axes[0], trace_a, "system A", "#2e86c1"),
        (axes[1], trace_b, "system B", "#f4a940"),
    ):
        sig = ground_truth_signal(trace)
        xs, ys = [], []
        for s, e, w in sig.segments:
            xs += [s / 1000.0, e / 1000.0]
            ys += [w, w]
        ax.plot(xs, ys, color=color, lw=1.0)
        ax.fill_between(xs, 0, ys, color=color, alpha=0.25, step=None)
        ax.set_ylabel("W")
        ax.set_title(f"{label} ({trace.header.system})", fontsize=9)
    axes[1].set_xlabel("time [ms]")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_sampler_errors(
    rows: Sequence[tuple[str, float, float, float]], path: str
) -> str:
    """Truth vs direct-sampled vs replay power per operator (demo table)."""
    names = [r[0] for r in rows]
    xs = range(len(rows))
    width = 0.27
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.bar([x - width for x in xs], [r[1] for r in rows], width, label="ground truth",
           color="#27ae60")
    ax.bar(list(xs), [r[2] for r in rows], width, label="direct sampling", color="#7f8c8d")
    ax.bar([x + width for x in xs], [r[3] for r in rows], width, label="replay",
           color="#2e86c1")
    for x, r in zip(xs, rows):
        ax.text(x, r[2] + 4, f"{100 * (r[2] - r[1]) / r[1]:+.0f}%", ha="center", fontsize=7)
        ax.text(x + width, r[3] + 4, f"{100 * (r[3] - r[1]) / r[1]:+.0f}%", ha="center", fontsize=7)
    ax.set_xticks(list(xs))
    ax.set_xticklabels(names, fontsize=8)
    ax.set_ylabel("mean power [W]")
    ax.set_title("low-rate sampler vs replay estimation")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_report_figures(
    report: Report,
    trace_a: Trace,
    trace_b: Trace,
    out_dir: str,
    sampler_rows: Optional[Sequence[tuple[str, float, float, float]]] = None,
) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    written = [
        render_energy_comparison(report, os.path.join(out_dir, "segment_energy.png")),
        render_power_timeline(trace_a, trace_b, os.path.join(out_dir, "power_timeline.png")),
    ]
    if sampler_rows:
        written.append(
            render_sampler_errors(sampler_rows, os.path.join(out_dir, "sampler_errors.png"))
        )
    return written
