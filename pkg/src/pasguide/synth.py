"""Procedural face-like crops for galleries, demos and tests."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .image_core import gaussian_blur, save_image

__all__ = ["make_face", "make_gallery", "write_gallery"]


def _ellipse(yy, xx, cy, cx, ry, rx, soft=1.0):
    d = np.sqrt(((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2)
    edge = soft / max(min(ry, rx), 1e-6)
    return np.clip((1.0 - d) / edge + 0.5, 0.0, 1.0)


def make_face(rng: np.random.Generator, size: int = 64) -> np.ndarray:
    """One synthetic frontal face: background, skin, hair, eyes, brows, mouth, skin texture."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    u = size / 64.0

    bg_a, bg_b = rng.uniform(0.15, 0.85, 3), rng.uniform(0.15, 0.85, 3)
    ramp = (yy / size)[:, :, None]
    img = bg_a * (1 - ramp) + bg_b * ramp

    skin = np.array([0.85, 0.65, 0.5]) * rng.uniform(0.55, 1.1) + rng.normal(0, 0.04, 3)
    hair = rng.uniform(0.05, 0.6) * np.array([1.0, 0.8, 0.6]) + rng.normal(0, 0.05, 3)
    cy, cx = size * (0.54 + rng.normal(0, 0.02)), size * (0.5 + rng.normal(0, 0.03))
    ry, rx = 22 * u * rng.uniform(0.9, 1.1), 17 * u * rng.uniform(0.85, 1.1)

    hair_m = _ellipse(yy, xx, cy - 5 * u, cx, ry + 4 * u, rx + 4 * u)
    img = img * (1 - hair_m[..., None]) + hair * hair_m[..., None]
    face_m = _ellipse(yy, xx, cy, cx, ry, rx)
    shade = 1.0 - 0.25 * ((xx - cx) / (rx * 1.4)) ** 2 - 0.1 * (yy - cy) / ry
    img = img * (1 - face_m[..., None]) + (skin * shade[..., None]) * face_m[..., None]

    eye_y = cy - 5 * u + rng.normal(0, u)
    eye_dx = 7 * u * rng.uniform(0.9, 1.15)
    iris = rng.uniform(0.05, 0.45, 3)
    for sx in (-1, 1):
        ex = cx + sx * eye_dx
        white = _ellipse(yy, xx, eye_y, ex, 2.2 * u, 4.0 * u)
        img = img * (1 - white[..., None]) + 0.92 * white[..., None]
        pupil = _ellipse(yy, xx, eye_y, ex, 1.8 * u, 1.8 * u)
        img = img * (1 - pupil[..., None]) + iris * pupil[..., None]
        brow = _ellipse(yy, xx, eye_y - 4.5 * u, ex, 0.9 * u, 4.5 * u)
        img = img * (1 - brow[..., None]) + hair * 0.8 * brow[..., None]

    nose = _ellipse(yy, xx, cy + 2 * u, cx + u, 4 * u, 1.2 * u)
    img = img * (1 - 0.25 * nose[..., None])
    mouth_y = cy + 9 * u * rng.uniform(0.9, 1.1)
    mouth = _ellipse(yy, xx, mouth_y, cx, 1.3 * u, 5.5 * u * rng.uniform(0.8, 1.2))
    lip = np.array([0.7, 0.25, 0.25]) * rng.uniform(0.7, 1.1)
    img = img * (1 - mouth[..., None]) + lip * mouth[..., None]

    # fine skin/hair texture gives the crops real high-frequency content
    tex = gaussian_blur(rng.normal(0, 1, (size, size)), 0.6 * u)
    tex = tex / (tex.std() + 1e-12)
    img = img + 0.035 * tex[..., None] * np.maximum(face_m, hair_m)[..., None]
    return np.clip(img, 0.0, 1.0)


def make_gallery(n: int = 16, size: int = 64, seed: int = 0) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    return [make_face(rng, size) for _ in range(n)]


def write_gallery(out_dir: str | Path, n: int = 16, size: int = 64, seed: int = 0) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, img in enumerate(make_gallery(n, size, seed)):
        p = out / f"face_{i:03d}.png"
        save_image(img, p)
        paths.append(p)
    return paths
