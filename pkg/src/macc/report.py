"""Figure rendering for run outputs.

Reads the delimited outputs the other commands produce (sweep summaries,
training curves, trajectory logs) and writes PNG figures next to them.
Only this path touches matplotlib; compute commands stay plot-free.
"""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .sim import Trajectory  # noqa: E402

SWEEP_METRICS = ("best_true_score", "redundancy_rate", "reproduction_coverage",
                 "total_compute", "reward_gini", "total_outlay")


def _read_csv(path: str) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


def render_sweep(summary_csv: str, out_path: str | None = None) -> str:
    """Per-metric mean +/- stderr against the varied value."""
    rows = _read_csv(summary_csv)
    if not rows:
        raise ValueError(f"{summary_csv} has no summary rows")
    key = rows[0]["vary_key"] or "value"
    labels = [r["vary_value"] for r in rows]
    xs = range(len(labels))
    fig, axes = plt.subplots(2, 3, figsize=(12, 6.5))
    for ax, metric in zip(axes.flat, SWEEP_METRICS):
        means = [float(r[f"{metric}_mean"]) for r in rows]
        errs = [float(r[f"{metric}_stderr"]) for r in rows]
        ax.errorbar(xs, means, yerr=errs, marker="o", capsize=3)
        ax.set_xticks(list(xs), labels)
        ax.set_xlabel(key)
        ax.set_title(metric.replace("_", " "))
        ax.grid(True, alpha=0.3)
    fig.tight_layout()
    out = out_path or os.path.join(os.path.dirname(summary_csv) or ".", "sweep_metrics.png")
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out


def render_curve(curve_csv: str, out_path: str | None = None) -> str:
    """Training welfare curve with the gradient-norm trace below it."""
    rows = _read_csv(curve_csv)
    if not rows:
        raise ValueError(f"{curve_csv} has no rows")
    its = [int(r["iteration"]) for r in rows]
    welfare = [float(r["mean_welfare"]) for r in rows]
    grads = [float(r["grad_norm"]) for r in rows]
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 6), sharex=True,
                                   height_ratios=[2, 1])
    ax1.plot(its, welfare, marker="o", ms=3)
    ax1.set_ylabel("mean welfare")
    ax1.grid(True, alpha=0.3)
    ax2.plot(its, grads, color="darkorange")
    ax2.set_ylabel("gradient norm")
    ax2.set_xlabel("iteration")
    ax2.grid(True, alpha=0.3)
    fig.tight_layout()
    out = out_path or os.path.join(os.path.dirname(curve_csv) or ".", "welfare_curve.png")
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out


def render_progress(log_path: str, out_path: str | None = None) -> str:
    """Best true score by round from a trajectory log."""
    trajectory = Trajectory.from_log(log_path)
    best = []
    running = 0.0
    truths_by_round: dict[int, list[float]] = {}
    for s in trajectory.submissions:
        if s.id in trajectory.true_scores:
            truths_by_round.setdefault(s.round, []).append(trajectory.true_scores[s.id])
    for t in range(trajectory.scenario.rounds):
        running = max([running] + truths_by_round.get(t, []))
        best.append(running)
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.step(range(len(best)), best, where="post")
    ax.set_xlabel("round")
    ax.set_ylabel("best true score")
    ax.set_ylim(0, 1.05)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    out = out_path or (os.path.splitext(log_path)[0] + "_progress.png")
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out


def render_path(path: str) -> list[str]:
    """Autodetect what `path` holds and render every figure it supports."""
    written: list[str] = []
    if os.path.isdir(path):
        for name in sorted(os.listdir(path)):
            full = os.path.join(path, name)
            if name == "summary.csv":
                written.append(render_sweep(full))
            elif name == "curve.csv":
                written.append(render_curve(full))
            elif name.endswith(".log"):
                written.append(render_progress(full))
        return written
    if path.endswith(".log"):
        return [render_progress(path)]
    head = open(path, encoding="utf-8").readline()
    if head.startswith("iteration,"):
        return [render_curve(path)]
    if "_mean" in head:
        return [render_sweep(path)]
    raise ValueError(f"do not know how to render {path}")
