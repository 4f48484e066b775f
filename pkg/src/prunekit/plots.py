"""Figure emitters: every plot is rendered from CSV/JSON result files alone."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _read_rows(csv_path):
    with open(csv_path) as fh:
        return list(csv.DictReader(fh))


def sweep_boxplot(csv_path, out_path, title="latency reduction by family"):
    """Boxplot of LR% per pruning family from a sweep CSV."""
    rows = _read_rows(csv_path)
    families = sorted({r["family"] for r in rows})
    series = [[float(r["lr_percent"]) for r in rows if r["family"] == f]
              for f in families]
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.boxplot(series, tick_labels=families)
    ax.set_ylabel("latency reduction (%)")
    ax.set_title(title)
    ax.grid(axis="y", linestyle="--", alpha=0.6)
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
    return out_path


def accuracy_latency_scatter(csv_path, out_path, title="accuracy vs latency"):
    """Accuracy vs mean latency scatter (one marker style per family)."""
    rows = [r for r in _read_rows(csv_path) if r.get("accuracy")]
    fig, ax = plt.subplots(figsize=(5, 4))
    for family, marker in (("filter", "x"), ("layer", "o")):
        pts = [(float(r["mean_ms"]), float(r["accuracy"]))
               for r in rows if r.get("family") == family]
        if pts:
            ax.scatter([p[0] for p in pts], [p[1] for p in pts], marker=marker,
                       label=family, alpha=0.8)
    ax.set_xlabel("latency (ms)")
    ax.set_ylabel("accuracy")
    ax.set_title(title)
    if ax.get_legend_handles_labels()[0]:
        ax.legend()
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
    return out_path


def ladder_bars(csv_path, out_path, title="proxy accuracy per layer"):
    """Per-candidate proxy accuracy bars; drops vs. the previous bar in red."""
    rows = _read_rows(csv_path)
    units = [int(r["unit_index"]) for r in rows]
    accs = [float(r["proxy_accuracy"]) for r in rows]
    gains = [float(r["gain"]) for r in rows]
    colors = ["tab:red" if g < 0 else "tab:blue" for g in gains]
    fig, ax = plt.subplots(figsize=(max(5, 0.4 * len(units)), 4))
    ax.bar([str(u) for u in units], accs, color=colors)
    ax.set_xlabel("unit index")
    ax.set_ylabel("proxy accuracy")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
    return out_path


def importance_bars(summary_json, out_path, title=None):
    """Per-unit layer-score bars from an importance summary JSON."""
    d = json.loads(Path(summary_json).read_text())
    scores = {int(u): float(v) for u, v in d["layer_scores"].items()}
    names = d.get("unit_names", {})
    units = sorted(scores)
    labels = [names.get(str(u), str(u)) for u in units]
    fig, ax = plt.subplots(figsize=(max(5, 0.4 * len(units)), 4))
    ax.bar(labels, [scores[u] for u in units])
    ax.set_ylabel("layer score")
    ax.set_title(title or d.get("criterion", "importance"))
    plt.setp(ax.get_xticklabels(), rotation=60, ha="right", fontsize=7)
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
    return out_path


def matrix_table(csv_path, out_path):
    """Render a criterion x budget grid as a markdown table."""
    rows = _read_rows(csv_path)
    budgets = sorted({r["budget"] for r in rows}, key=lambda b: float(b))
    criteria = []
    for r in rows:
        if r["criterion"] not in criteria:
            criteria.append(r["criterion"])
    cells = {(r["criterion"], r["budget"]): r for r in rows}
    lines = ["| criterion | " + " | ".join(f"{b} units" for b in budgets) + " |",
             "|---" * (len(budgets) + 1) + "|"]
    for c in criteria:
        vals = []
        for b in budgets:
            r = cells.get((c, b))
            if r is None or r["status"] != "ok":
                vals.append("-")
            else:
                vals.append(f"{float(r['accuracy']):.4f} ({float(r['lr_percent']):.1f}%)")
        lines.append("| " + c + " | " + " | ".join(vals) + " |")
    Path(out_path).write_text("\n".join(lines) + "\n")
    return out_path
