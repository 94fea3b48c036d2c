"""Rendering helpers: CAM overlays, saliency images, scatter and curve plots."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from PIL import Image


def heat_to_rgb(heat: np.ndarray, cmap: str = "jet") -> np.ndarray:
    """Map a [0, 1] heatmap to float RGB via a matplotlib colormap."""
    return matplotlib.colormaps[cmap](np.clip(heat, 0.0, 1.0))[..., :3]


def overlay_cam(image_u8: np.ndarray, heat: np.ndarray, cmap: str = "jet") -> np.ndarray:
    """Alpha blend: out = 0.5 * image + 0.5 * colormap(heat), uint8."""
    img = image_u8.astype(np.float64) / 255.0
    colored = heat_to_rgb(heat, cmap)
    out = 0.5 * img + 0.5 * colored
    return np.clip(np.round(out * 255.0), 0, 255).astype(np.uint8)


def save_image(path: str | Path, array_u8: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(array_u8).save(path)


def grayscale_u8(values: np.ndarray) -> np.ndarray:
    return np.clip(np.round(values * 255.0), 0, 255).astype(np.uint8)


def project_2d(embeddings: np.ndarray, method: str = "pca") -> np.ndarray:
    """Pluggable 2-d projection for embedding scatter plots; default PCA."""
    x = np.asarray(embeddings, dtype=np.float64)
    if method != "pca":
        raise ValueError(f"unknown projection {method!r}; available: pca")
    centered = x - x.mean(axis=0, keepdims=True)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    return centered @ vt[:2].T


def scatter_embeddings(
    path: str | Path,
    points_2d: np.ndarray,
    labels: np.ndarray,
    title: str = "",
    annotation: str = "",
) -> None:
    fig, ax = plt.subplots(figsize=(5, 5))
    for cls in np.unique(labels):
        pts = points_2d[labels == cls]
        ax.scatter(pts[:, 0], pts[:, 1], s=12, label=f"class {cls}", alpha=0.7)
    ax.legend(fontsize=8)
    if title:
        ax.set_title(title)
    if annotation:
        ax.text(
            0.02, 0.02, annotation, transform=ax.transAxes, fontsize=8, va="bottom"
        )
    fig.tight_layout()
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_curves(
    path: str | Path,
    rows: list[dict],
    x_key: str,
    y_key: str,
    series_key: str | None = None,
    xlabel: str = "",
    ylabel: str = "",
    title: str = "",
) -> None:
    """Line plot from exported comma-separated rows (parsed into dicts)."""
    fig, ax = plt.subplots(figsize=(5, 4))
    if series_key is None:
        xs = [float(r[x_key]) for r in rows]
        ys = [float(r[y_key]) for r in rows]
        ax.plot(xs, ys, marker="o")
    else:
        series = sorted({r[series_key] for r in rows})
        for s in series:
            sub = [r for r in rows if r[series_key] == s]
            xs = [float(r[x_key]) for r in sub]
            ys = [float(r[y_key]) for r in sub]
            ax.plot(xs, ys, marker="o", label=f"{series_key}={s}")
        ax.legend(fontsize=8)
    ax.set_xlabel(xlabel or x_key)
    ax.set_ylabel(ylabel or y_key)
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
