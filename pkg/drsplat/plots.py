"""Plotting functions for metric correlation, threshold sweeps and Top-k ablations."""

import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import plotly.graph_objects as go
from plotly.subplots import make_subplots

logger = logging.getLogger(__name__)


def _format_r(r: Optional[float]) -> str:
    return "undefined" if r is None else f"{r:.3f}"


def plot_correlation(result: Dict[str, Any], output_path: Path) -> None:
    """
    Scatter the weighted and unweighted mIoU of every scene against the voxel mIoU.

    Args:
        result: Output of ``correlation_experiment``
        output_path: Path to save the PNG
    """
    voxel = np.asarray(result["voxel_miou"])
    panels = [
        ("weighted_miou", "Significance-weighted mIoU", result["r_weighted"], "tab:blue"),
        ("unweighted_miou", "Unweighted mIoU", result["r_unweighted"], "tab:orange"),
    ]

    fig, axes = plt.subplots(1, 2, figsize=(12, 5), sharey=True)
    for ax, (key, title, r, color) in zip(axes, panels):
        ax.scatter(result[key], voxel, color=color, alpha=0.8, edgecolor="black", linewidth=0.5)
        ax.plot([0, 1], [0, 1], color="gray", linestyle=":", linewidth=1)
        ax.set_xlabel(title, fontsize=12)
        ax.set_title(f"{title} (r = {_format_r(r)})", fontsize=13, fontweight="bold")
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1)
        ax.grid(True, alpha=0.3)
    axes[0].set_ylabel("Voxel mIoU", fontsize=12)

    plt.tight_layout()
    output_path.parent.mkdir(parents=True, exist_ok=True)
    plt.savefig(output_path, dpi=150, bbox_inches="tight")
    plt.close()

    logger.debug(f"Saved correlation plot: {output_path}")


def plot_correlation_interactive(result: Dict[str, Any], output_path: Path) -> None:
    """Interactive Plotly version of ``plot_correlation`` with per-scene hover details."""
    scenes = result.get("included", list(range(len(result["voxel_miou"]))))
    fig = make_subplots(
        rows=1,
        cols=2,
        shared_yaxes=True,
        subplot_titles=(
            f"Weighted (r = {_format_r(result['r_weighted'])})",
            f"Unweighted (r = {_format_r(result['r_unweighted'])})",
        ),
    )

    for col, key in enumerate(("weighted_miou", "unweighted_miou"), start=1):
        fig.add_trace(
            go.Scatter(
                x=result[key],
                y=result["voxel_miou"],
                mode="markers",
                name=key,
                text=[f"scene {s}" for s in scenes],
                hovertemplate="%{text}<br>Gaussian mIoU: %{x:.3f}<br>Voxel mIoU: %{y:.3f}<extra></extra>",
            ),
            row=1,
            col=col,
        )

    fig.update_xaxes(range=[0, 1], title_text="Gaussian-level mIoU")
    fig.update_yaxes(range=[0, 1], title_text="Voxel mIoU", row=1, col=1)
    fig.update_layout(title="Gaussian-level IoU vs voxel oracle", height=500, width=1100)

    output_path.parent.mkdir(parents=True, exist_ok=True)
    fig.write_html(str(output_path))

    logger.debug(f"Saved interactive correlation plot: {output_path}")


def plot_threshold_sweep(
    rows: List[Dict[str, Any]], output_path: Path, best: Optional[Dict[str, Any]] = None
) -> None:
    """
    Plot weighted and count IoU against the selection threshold.

    Args:
        rows: Output of ``threshold_sweep``
        output_path: Path to save the PNG
        best: Row to highlight
    """
    thresholds = [r["threshold"] for r in rows]
    weighted = [np.nan if r["weighted_iou"] is None else r["weighted_iou"] for r in rows]
    count = [np.nan if r["count_iou"] is None else r["count_iou"] for r in rows]

    fig, ax = plt.subplots(figsize=(10, 5))
    ax.plot(thresholds, weighted, "b-", linewidth=1.5, label="Weighted IoU")
    ax.plot(thresholds, count, "k--", linewidth=1, alpha=0.7, label="Count IoU")
    if best is not None:
        ax.axvline(x=best["threshold"], color="red", linestyle=":", linewidth=1.5,
                   label=f"Best threshold {best['threshold']:.3f}")

    ax.set_xlabel("Threshold", fontsize=12)
    ax.set_ylabel("IoU", fontsize=12)
    ax.set_title("Selection threshold sweep", fontsize=14, fontweight="bold")
    ax.set_ylim(0, 1.05)
    ax.legend(loc="best", fontsize=10)
    ax.grid(True, alpha=0.3)

    plt.tight_layout()
    output_path.parent.mkdir(parents=True, exist_ok=True)
    plt.savefig(output_path, dpi=150, bbox_inches="tight")
    plt.close()

    logger.debug(f"Saved threshold sweep plot: {output_path}")


def plot_threshold_sweep_interactive(rows: List[Dict[str, Any]], output_path: Path) -> None:
    fig = go.Figure()
    thresholds = [r["threshold"] for r in rows]
    for key, name in (("weighted_iou", "Weighted IoU"), ("count_iou", "Count IoU")):
        fig.add_trace(go.Scatter(
            x=thresholds,
            y=[r[key] for r in rows],
            mode="lines+markers",
            name=name,
            customdata=[r["selected"] for r in rows],
            hovertemplate="Threshold: %{x:.3f}<br>IoU: %{y:.3f}<br>Selected: %{customdata}<extra></extra>",
        ))

    fig.update_layout(
        title="Selection threshold sweep",
        xaxis_title="Threshold",
        yaxis_title="IoU",
        height=500,
        width=1000,
    )
    output_path.parent.mkdir(parents=True, exist_ok=True)
    fig.write_html(str(output_path))

    logger.debug(f"Saved interactive threshold sweep plot: {output_path}")


def plot_topk_ablation(rows: List[Dict[str, Any]], output_path: Path) -> None:
    """Weighted mIoU and recovery rate against the number of Gaussians registered per ray."""
    ks = [r["k"] for r in rows]
    miou = [np.nan if r["weighted_miou"] is None else r["weighted_miou"] for r in rows]
    fig, ax = plt.subplots(figsize=(8, 5))
    ax.plot(ks, miou, "o-", label="Weighted mIoU")
    ax.plot(ks, [r["recovery"] for r in rows], "s--", alpha=0.7, label="Label recovery")
    ax.set_xscale("log")
    ax.set_xlabel("Top-k", fontsize=12)
    ax.set_ylabel("Score", fontsize=12)
    ax.set_title("Top-k registration ablation", fontsize=14, fontweight="bold")
    ax.legend(loc="lower right", fontsize=10)
    ax.grid(True, alpha=0.3)

    plt.tight_layout()
    output_path.parent.mkdir(parents=True, exist_ok=True)
    plt.savefig(output_path, dpi=150, bbox_inches="tight")
    plt.close()

    logger.debug(f"Saved Top-k ablation plot: {output_path}")
