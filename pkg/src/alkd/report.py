"""Report rendering: delimited outputs plus matplotlib figures saved next to them."""

from __future__ import annotations

import csv
import json

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import MetricsReport


def render_loss_curve(metrics_jsonl_path, out_png) -> None:
    steps, mlm, kd, total = [], [], [], []
    with open(metrics_jsonl_path, encoding="utf-8") as fh:
        for line in fh:
            rec = json.loads(line)
            steps.append(rec["step"])
            mlm.append(rec["mlm"])
            kd.append(rec["kd"])
            total.append(rec["total"])
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(steps, total, label="total", lw=1.5)
    ax.plot(steps, mlm, label="mlm", lw=1.0, alpha=0.8)
    if any(v != 0.0 for v in kd):
        ax.plot(steps, kd, label="kd", lw=1.0, alpha=0.8)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_png, dpi=120)
    plt.close(fig)


def write_report_csv(reports: list[MetricsReport], out_csv) -> None:
    with open(out_csv, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["task", "metric", "seed", "value"])
        for rep in reports:
            for name, entry in sorted(rep.metrics.items()):
                for seed, value in zip(rep.seeds, entry["per_seed"]):
                    w.writerow([rep.task, name, seed, "" if value is None else repr(value)])
                w.writerow([rep.task, name, "mean",
                            "" if entry["mean"] is None else repr(entry["mean"])])
                w.writerow([rep.task, name, "std",
                            "" if entry["std"] is None else repr(entry["std"])])


def render_report_figure(reports: list[MetricsReport], out_png) -> None:
    rows = []
    for rep in reports:
        for name, entry in sorted(rep.metrics.items()):
            if entry["mean"] is not None:
                rows.append((f"{rep.task}\n{name}", entry["mean"], entry["std"]))
    if not rows:
        return
    labels, means, stds = zip(*rows)
    fig, ax = plt.subplots(figsize=(max(5, 1.4 * len(rows)), 4))
    x = np.arange(len(rows))
    ax.bar(x, means, yerr=stds, capsize=4, color="#4878a8")
    ax.set_xticks(x)
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_ylabel("metric (mean over seeds, population std)")
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_png, dpi=120)
    plt.close(fig)
