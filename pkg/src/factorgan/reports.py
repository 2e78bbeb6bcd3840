"""Report emission: metric JSON, delimited summaries, figures, traversal grids."""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
from PIL import Image

from .metrics import MetricReport

ANCHOR_BORDER = 2  # px of red frame marking the anchor cell


def save_report(report: MetricReport, path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(report.to_json(), f, indent=2)


def load_report(path) -> MetricReport:
    with open(path) as f:
        return MetricReport.from_json(json.load(f))


METRIC_COLUMNS = ("mig", "l2", "mig_gen", "l2_gen", "factor_score")


def write_metrics_csv(rows: list[tuple[str, MetricReport]], path):
    """One line per labeled report; missing metrics stay empty."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        f.write("label," + ",".join(METRIC_COLUMNS) + "\n")
        for label, report in rows:
            vals = [getattr(report, c) for c in METRIC_COLUMNS]
            f.write(label + "," + ",".join(
                "" if v is None else f"{v:.6f}" for v in vals) + "\n")


def plot_eta_sweep(rows: list[tuple[float, MetricReport]], path):
    """Metric-vs-supervision-rate curves, one panel per metric family."""
    rows = sorted(rows, key=lambda r: r[0])
    etas = [r[0] for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    for name, style in (("mig", "o-"), ("mig_gen", "s--")):
        vals = [getattr(r, name) for _, r in rows]
        if any(v is not None for v in vals):
            ax1.plot(etas, [np.nan if v is None else v for v in vals], style, label=name)
    ax1.set_xlabel("supervision rate")
    ax1.set_ylabel("score")
    ax1.set_ylim(-0.02, 1.02)
    ax1.legend()
    for name, style in (("l2", "o-"), ("l2_gen", "s--")):
        vals = [getattr(r, name) for _, r in rows]
        if any(v is not None for v in vals):
            ax2.plot(etas, [np.nan if v is None else v for v in vals], style, label=name)
    ax2.set_xlabel("supervision rate")
    ax2.set_ylabel("distance")
    ax2.legend()
    fig.tight_layout()
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_loss_curves(loss_curve: list[dict], path):
    if not loss_curve:
        return
    steps = [e["images_seen"] for e in loss_curve]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for key in ("loss_g", "loss_de", "sup", "sr"):
        if any(e.get(key) for e in loss_curve):
            ax.plot(steps, [e.get(key, 0.0) for e in loss_curve], label=key)
    ax.set_xlabel("images seen")
    ax.set_ylabel("loss")
    ax.legend()
    fig.tight_layout()
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _to_uint8(img: np.ndarray) -> np.ndarray:
    return np.clip((np.asarray(img, dtype=np.float64) + 1.0) * 127.5, 0, 255).astype(np.uint8)


def traversal_grid(rows: list[np.ndarray], pad: int = 2) -> np.ndarray:
    """Assemble traversal rows into one image; the first cell of each row is
    the anchor and gets a red frame."""
    cells = [[_to_uint8(cell) for cell in row] for row in rows]
    h, w = cells[0][0].shape[:2]
    n_cols = max(len(row) for row in cells)
    grid = np.full(
        (len(cells) * (h + pad) + pad, n_cols * (w + pad) + pad, 3), 255, dtype=np.uint8)
    for r, row in enumerate(cells):
        for col, cell in enumerate(row):
            if col == 0:
                cell = cell.copy()
                cell[:ANCHOR_BORDER, :] = (255, 0, 0)
                cell[-ANCHOR_BORDER:, :] = (255, 0, 0)
                cell[:, :ANCHOR_BORDER] = (255, 0, 0)
                cell[:, -ANCHOR_BORDER:] = (255, 0, 0)
            y = pad + r * (h + pad)
            x = pad + col * (w + pad)
            grid[y:y + h, x:x + w] = cell
    return grid


def save_png(img_uint8: np.ndarray, path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(img_uint8).save(path)
