"""Report rendering: loss curves and evaluation figures next to the
machine-readable outputs they visualize.
"""
from __future__ import annotations

import json
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .evaluation import EvalReport  # noqa: E402


def moving_average(values, window: int) -> np.ndarray:
    """Trailing moving average; entry i averages the window ending at i."""
    arr = np.asarray(values, dtype=np.float64)
    if window < 1:
        raise ValueError("window must be >= 1")
    out = np.empty_like(arr)
    csum = np.cumsum(np.insert(arr, 0, 0.0))
    for i in range(len(arr)):
        lo = max(0, i - window + 1)
        out[i] = (csum[i + 1] - csum[lo]) / (i + 1 - lo)
    return out


def read_loss_log(run_dir: Path) -> dict[str, list[tuple[int, float]]]:
    """losses.jsonl -> {term: [(step, value), ...]}."""
    series: dict[str, list[tuple[int, float]]] = {}
    log_path = Path(run_dir) / "losses.jsonl"
    if not log_path.is_file():
        return series
    with open(log_path) as fh:
        for line in fh:
            rec = json.loads(line)
            series.setdefault(rec["term"], []).append((rec["step"], rec["value"]))
    return series


def write_loss_curves(run_dir: Path, window: int = 20) -> Path | None:
    """Render smoothed curves of the headline terms beside the loss log."""
    series = read_loss_log(run_dir)
    if not series:
        return None
    terms = [t for t in ("gen.total", "seg.gen.total", "syn.gen.total",
                         "seg.disc.mask", "seg.disc.photo", "syn.disc.adv")
             if t in series]
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for term in terms:
        pts = sorted(series[term])
        steps = [p[0] for p in pts]
        vals = moving_average([p[1] for p in pts], window)
        ax.plot(steps, vals, label=term, linewidth=1.2)
    ax.set_xlabel("step")
    ax.set_ylabel(f"loss ({window}-step moving average)")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    out = Path(run_dir) / "loss_curves.png"
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out


def write_eval_report(report: EvalReport, out_dir: Path) -> dict[str, Path]:
    """Write the text report, the CSV table, and a distance bar chart."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    txt = out_dir / "report.txt"
    csv = out_dir / "report.csv"
    png = out_dir / "report.png"
    txt.write_text(report.to_text())
    csv.write_text(report.to_csv())

    names = [row.name for row in report.rows]
    means = [row.mean_distance for row in report.rows]
    fig, ax = plt.subplots(figsize=(6.4, 4))
    ax.bar(names, means, color="#487899", label="original vs anonymized")
    ax.axhline(report.criterion_same, color="#b05a2f", linestyle="--",
               label=f"same identity ({report.criterion_same:.2f})")
    ax.axhline(report.criterion_diff, color="#3f7f4e", linestyle=":",
               label=f"different identity ({report.criterion_diff:.2f})")
    ax.set_ylabel("mean embedding distance")
    ax.legend(fontsize=8)
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(png, dpi=120)
    plt.close(fig)
    return {"txt": txt, "csv": csv, "png": png}
