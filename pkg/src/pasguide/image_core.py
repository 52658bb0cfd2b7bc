"""Pixel container helpers, color conversions and spatial primitives.

Images are plain ``numpy`` arrays of shape ``(H, W, C)`` with ``C`` in
``{1, 3}`` and float64 samples nominally in ``[0, 1]``. Intensity maps are
``(H, W)`` arrays. Nothing here clamps unless stated.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
from PIL import Image as PILImage
from scipy.ndimage import convolve1d
from skimage.color import rgb2lab

__all__ = [
    "InvalidInputError",
    "as_image",
    "check_image",
    "to_intensity",
    "minmax_norm",
    "gaussian_kernel",
    "gaussian_blur",
    "blur_matrix",
    "cubic_weights",
    "resize_matrix",
    "resize",
    "rgb_to_lab",
    "rgb_to_hsv",
    "hue_preserving_gamma",
    "load_image",
    "save_image",
    "to_uint8",
]


class InvalidInputError(ValueError):
    """Raised when an argument violates an operation's precondition."""


def as_image(data) -> np.ndarray:
    """Coerce ``data`` to a float64 ``(H, W, C)`` array; 2-D input gains a channel axis."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    check_image(arr)
    return arr


def check_image(img: np.ndarray, channels: int | None = None) -> None:
    if not isinstance(img, np.ndarray) or img.ndim != 3:
        raise InvalidInputError(f"expected an (H, W, C) array, got shape {np.shape(img)}")
    h, w, c = img.shape
    if h < 1 or w < 1 or c not in (1, 3):
        raise InvalidInputError(f"invalid image shape {img.shape}")
    if channels is not None and c != channels:
        raise InvalidInputError(f"expected {channels} channels, got {c}")
    if not np.all(np.isfinite(img)):
        raise InvalidInputError("image contains NaN or Inf")


def to_intensity(img: np.ndarray) -> np.ndarray:
    """HSI intensity: the per-pixel average of R, G and B."""
    check_image(img, channels=3)
    return img.mean(axis=2)


def minmax_norm(m: np.ndarray) -> np.ndarray:
    """Rescale to ``[0, 1]``. A constant map normalizes to all zeros."""
    m = np.asarray(m, dtype=np.float64)
    lo, hi = m.min(), m.max()
    if hi == lo:
        return np.zeros_like(m)
    return (m - lo) / (hi - lo)


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian taps with radius ``ceil(3 * sigma)``."""
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with half-sample reflect padding.

    Works on ``(H, W)`` maps as well as ``(H, W, C)`` images. ``sigma == 0``
    returns the input object itself.
    """
    if sigma < 0:
        raise InvalidInputError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return img
    k = gaussian_kernel(sigma)
    out = convolve1d(np.asarray(img, dtype=np.float64), k, axis=0, mode="reflect")
    return convolve1d(out, k, axis=1, mode="reflect")


def blur_matrix(n: int, sigma: float) -> np.ndarray:
    """Dense ``(n, n)`` operator of the 1-D blur used by :func:`gaussian_blur`.

    ``gaussian_blur(x) == B_h @ x @ B_w.T`` per channel. The transpose is the
    adjoint needed when differentiating through the blur.
    """
    if sigma == 0:
        return np.eye(n)
    return convolve1d(np.eye(n), gaussian_kernel(sigma), axis=0, mode="reflect")


def cubic_weights(t: np.ndarray, a: float = -0.5) -> np.ndarray:
    """Keys cubic convolution kernel; ``a = -0.5`` is Catmull-Rom."""
    t = np.abs(t)
    t2, t3 = t * t, t * t * t
    near = (a + 2) * t3 - (a + 3) * t2 + 1
    far = a * t3 - 5 * a * t2 + 8 * a * t - 4 * a
    return np.where(t <= 1, near, np.where(t < 2, far, 0.0))


def resize_matrix(n_in: int, n_out: int) -> np.ndarray:
    """``(n_out, n_in)`` bicubic interpolation matrix.

    Pixel centers are aligned (``src = (dst + 0.5) * n_in / n_out - 0.5``),
    out-of-range taps are clamped to the border sample, no antialiasing.
    """
    if n_in == n_out:
        return np.eye(n_in)
    scale = n_in / n_out
    src = (np.arange(n_out) + 0.5) * scale - 0.5
    base = np.floor(src).astype(int)
    mat = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    for off in (-1, 0, 1, 2):
        idx = base + off
        w = cubic_weights(src - idx)
        np.add.at(mat, (rows, np.clip(idx, 0, n_in - 1)), w)
    return mat


def resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bicubic (Catmull-Rom) resize of an ``(H, W)`` or ``(H, W, C)`` array."""
    if out_h < 1 or out_w < 1:
        raise InvalidInputError(f"output size must be >= 1, got {out_h}x{out_w}")
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[:2]
    if (h, w) == (out_h, out_w):
        return img.copy()
    rh = resize_matrix(h, out_h)
    rw = resize_matrix(w, out_w)
    if img.ndim == 2:
        return rh @ img @ rw.T
    return np.einsum("ij,jkc,lk->ilc", rh, img, rw)


def rgb_to_lab(img: np.ndarray) -> np.ndarray:
    """sRGB in ``[0, 1]`` to CIELAB (D65 white)."""
    check_image(img, channels=3)
    return rgb2lab(np.clip(img, 0.0, 1.0), illuminant="D65", observer="2")


def rgb_to_hsv(img: np.ndarray) -> np.ndarray:
    """HSV with hue in ``[0, 1)``; gray pixels get hue 0."""
    r, g, b = img[..., 0], img[..., 1], img[..., 2]
    v = img.max(axis=-1)
    c = v - img.min(axis=-1)
    safe_c = np.where(c > 0, c, 1.0)
    h = np.where(
        v == r,
        ((g - b) / safe_c) % 6.0,
        np.where(v == g, (b - r) / safe_c + 2.0, (r - g) / safe_c + 4.0),
    )
    h = np.where(c > 0, h / 6.0, 0.0)
    s = np.where(v > 0, c / np.where(v > 0, v, 1.0), 0.0)
    return np.stack([h, s, v], axis=-1)


def hue_preserving_gamma(img: np.ndarray, gamma: float) -> np.ndarray:
    """Apply ``V -> V**gamma`` to the HSV value, scaling all channels alike.

    Scaling RGB by a common factor leaves HSV hue and saturation untouched.
    Pixels with ``V == 0`` are returned unchanged.
    """
    if gamma <= 0:
        raise InvalidInputError(f"gamma must be > 0, got {gamma}")
    check_image(img, channels=3)
    v = img.max(axis=2, keepdims=True)
    pos = v > 0
    safe_v = np.where(pos, v, 1.0)
    scale = np.where(pos, np.power(safe_v, gamma - 1.0), 1.0)
    return img * scale


def to_uint8(img: np.ndarray) -> np.ndarray:
    """Clamp to ``[0, 1]`` and quantize with round-half-up."""
    return np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def load_image(path: str | Path, channels: int = 3) -> np.ndarray:
    mode = "RGB" if channels == 3 else "L"
    with PILImage.open(path) as im:
        arr = np.asarray(im.convert(mode), dtype=np.float64) / 255.0
    return as_image(arr)


def save_image(img: np.ndarray, path: str | Path) -> None:
    data = to_uint8(img)
    if data.shape[2] == 1:
        data = data[:, :, 0]
    PILImage.fromarray(data).save(path)
