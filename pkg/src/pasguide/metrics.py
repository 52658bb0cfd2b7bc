"""Fidelity and degradation statistics for restored or low-light images."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.ndimage import convolve

from .image_core import (
    InvalidInputError,
    check_image,
    gaussian_blur,
    load_image,
    rgb_to_lab,
    to_intensity,
)

log = logging.getLogger(__name__)

__all__ = [
    "PSNR_CAP",
    "LAPLACIAN_KERNEL",
    "psnr",
    "mean_chroma",
    "laplacian_variance",
    "ImageStats",
    "DatasetStats",
    "image_stats",
    "analyze_dataset",
    "write_stats_csv",
    "crop_faces",
    "read_boxes_csv",
    "INTENSITY_BINS",
    "CHROMA_BINS",
    "LAPVAR_BINS",
]

PSNR_CAP = 99.0
LAPLACIAN_KERNEL = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")

INTENSITY_BINS = np.arange(0.0, 255.0 + 5.0, 5.0)
INTENSITY_BINS[-1] = 255.0
CHROMA_BINS = np.arange(0.0, 62.0, 2.0)
# Laplacian variance on the 8-bit scale
LAPVAR_BINS = np.logspace(-2, 4, 25)


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    if np.shape(a) != np.shape(b):
        raise InvalidInputError(f"shape mismatch: {np.shape(a)} vs {np.shape(b)}")
    mse = float(np.mean((np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)) ** 2))
    if mse == 0:
        return PSNR_CAP
    return 10.0 * np.log10(peak**2 / mse)


def mean_chroma(img: np.ndarray) -> float:
    """Average CIELAB chroma sqrt(a^2 + b^2)."""
    lab = rgb_to_lab(img)
    return float(np.mean(np.hypot(lab[..., 1], lab[..., 2])))


def laplacian_variance(img: np.ndarray, denoise_sigma: float = 1.0) -> float:
    """Population variance of the 4-neighbour Laplacian of the (pre-smoothed) intensity.

    Uses the values as given; multiply by 255**2 for the 8-bit convention.
    """
    if denoise_sigma < 0:
        raise InvalidInputError(f"denoise_sigma must be >= 0, got {denoise_sigma}")
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3:
        gray = to_intensity(img) if img.shape[2] == 3 else img[:, :, 0]
    else:
        gray = img
    gray = gaussian_blur(gray, denoise_sigma)
    response = convolve(gray, LAPLACIAN_KERNEL, mode="reflect")
    return float(np.var(response))


@dataclass
class ImageStats:
    name: str
    mean_intensity: float
    mean_chroma: float
    laplacian_variance: float


@dataclass
class DatasetStats:
    images: list[ImageStats] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)
    intensity_hist: np.ndarray = field(default_factory=lambda: np.zeros(len(INTENSITY_BINS) - 1, int))
    chroma_hist: np.ndarray = field(default_factory=lambda: np.zeros(len(CHROMA_BINS) - 1, int))
    lapvar_hist: np.ndarray = field(default_factory=lambda: np.zeros(len(LAPVAR_BINS) - 1, int))


def image_stats(img: np.ndarray, name: str = "", denoise_sigma: float = 1.0) -> ImageStats:
    """Intensity (8-bit scale), chroma and Laplacian variance (8-bit scale)."""
    check_image(img, channels=3)
    return ImageStats(
        name=name,
        mean_intensity=float(to_intensity(img).mean() * 255.0),
        mean_chroma=mean_chroma(img),
        laplacian_variance=laplacian_variance(img, denoise_sigma) * 255.0**2,
    )


def _histogram(values: Sequence[float], edges: np.ndarray) -> np.ndarray:
    # out-of-range values land in the end bins so counts always sum to len(values)
    idx = np.searchsorted(edges, np.asarray(values, dtype=np.float64), side="right") - 1
    idx = np.clip(idx, 0, len(edges) - 2)
    return np.bincount(idx, minlength=len(edges) - 1)


def analyze_dataset(directory: str | Path, denoise_sigma: float = 1.0) -> DatasetStats:
    """Per-image statistics and fixed-bin histograms for every image in ``directory``."""
    files = sorted(p for p in Path(directory).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    stats = DatasetStats()
    for path in files:
        try:
            img = load_image(path)
        except Exception as exc:
            log.warning("skipping unreadable image %s: %s", path, exc)
            stats.skipped.append(path.name)
            continue
        stats.images.append(image_stats(img, path.name, denoise_sigma))
    stats.intensity_hist = _histogram([s.mean_intensity for s in stats.images], INTENSITY_BINS)
    stats.chroma_hist = _histogram([s.mean_chroma for s in stats.images], CHROMA_BINS)
    stats.lapvar_hist = _histogram([s.laplacian_variance for s in stats.images], LAPVAR_BINS)
    return stats


def _write_hist(path: Path, edges: np.ndarray, counts: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_lo", "bin_hi", "count"])
        for lo, hi, n in zip(edges[:-1], edges[1:], counts):
            writer.writerow([f"{lo:.6g}", f"{hi:.6g}", int(n)])


def write_stats_csv(stats: DatasetStats, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "stats.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["filename", "mean_intensity", "mean_chroma", "laplacian_variance"])
        for s in stats.images:
            writer.writerow(
                [s.name, f"{s.mean_intensity:.6g}", f"{s.mean_chroma:.6g}", f"{s.laplacian_variance:.6g}"]
            )
    _write_hist(out / "hist_intensity.csv", INTENSITY_BINS, stats.intensity_hist)
    _write_hist(out / "hist_chroma.csv", CHROMA_BINS, stats.chroma_hist)
    _write_hist(out / "hist_laplacian_variance.csv", LAPVAR_BINS, stats.lapvar_hist)


def crop_faces(
    image: np.ndarray, boxes: Iterable[tuple[float, float, float, float]], min_size: int = 32
) -> tuple[list[np.ndarray], int]:
    """Cut out each ``(x_min, y_min, x_max, y_max)`` box (max exclusive).

    Boxes are clamped to the image. Degenerate boxes and crops whose smaller
    side is below ``min_size`` are dropped; returns ``(crops, n_dropped)``.
    """
    h, w = image.shape[:2]
    crops, dropped = [], 0
    for box in boxes:
        x0, y0, x1, y1 = (int(round(v)) for v in box)
        if x1 <= x0 or y1 <= y0:
            dropped += 1
            continue
        x0, x1 = max(0, x0), min(w, x1)
        y0, y1 = max(0, y0), min(h, y1)
        if x1 <= x0 or y1 <= y0 or min(x1 - x0, y1 - y0) < min_size:
            dropped += 1
            continue
        crops.append(image[y0:y1, x0:x1].copy())
    return crops, dropped


def read_boxes_csv(path: str | Path) -> dict[str, list[tuple[float, float, float, float]]]:
    boxes: dict[str, list[tuple[float, float, float, float]]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            box = tuple(float(row[k]) for k in ("x_min", "y_min", "x_max", "y_max"))
            boxes.setdefault(row["filename"], []).append(box)
    return boxes
