"""Synthetic low-light face degradation.

Stage one is the usual blind-face-restoration chain (blur, downsample, AWGN,
JPEG); stage two darkens with a fixed exposure factor and a hue-preserving
gamma. The downsampled image is resized back to the input size before JPEG so
outputs keep the input resolution.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage

from .image_core import (
    InvalidInputError,
    check_image,
    gaussian_blur,
    hue_preserving_gamma,
    resize,
    to_uint8,
)

__all__ = [
    "PARAM_RANGES",
    "DegradationParams",
    "sample_params",
    "jpeg_roundtrip",
    "apply_degradation",
]

PARAM_RANGES = {
    "sigma": (0.1, 5.0),
    "r": (1.0, 4.0),
    "delta": (0.0, 15.0),
    "q": (60, 100),
    "gamma": (1.7, 1.9),
}
EXPOSURE_FACTOR = 0.25


@dataclass(frozen=True)
class DegradationParams:
    sigma: float
    r: float
    delta: float
    q: int
    gamma: float
    alpha_exp: float = EXPOSURE_FACTOR
    seed: int = 0

    def validate(self) -> None:
        for name, (lo, hi) in PARAM_RANGES.items():
            v = getattr(self, name)
            if not lo <= v <= hi:
                raise InvalidInputError(f"{name}={v} outside [{lo}, {hi}]")
        if not 0 < self.alpha_exp <= 1:
            raise InvalidInputError(f"alpha_exp={self.alpha_exp} outside (0, 1]")


def sample_params(rng: np.random.Generator) -> DegradationParams:
    return DegradationParams(
        sigma=float(rng.uniform(*PARAM_RANGES["sigma"])),
        r=float(rng.uniform(*PARAM_RANGES["r"])),
        delta=float(rng.uniform(*PARAM_RANGES["delta"])),
        q=int(rng.integers(PARAM_RANGES["q"][0], PARAM_RANGES["q"][1] + 1)),
        gamma=float(rng.uniform(*PARAM_RANGES["gamma"])),
        alpha_exp=EXPOSURE_FACTOR,
        seed=int(rng.integers(0, 2**31 - 1)),
    )


def jpeg_roundtrip(img: np.ndarray, quality: int) -> np.ndarray:
    """Encode and decode with Pillow's libjpeg at the given quality."""
    buf = io.BytesIO()
    data = to_uint8(img)
    mode_img = PILImage.fromarray(data[:, :, 0] if data.shape[2] == 1 else data)
    mode_img.save(buf, format="JPEG", quality=int(quality))
    buf.seek(0)
    with PILImage.open(buf) as im:
        out = np.asarray(im, dtype=np.float64) / 255.0
    return out.reshape(img.shape)


def apply_degradation(y: np.ndarray, p: DegradationParams, validate: bool = True) -> np.ndarray:
    """Blur, downsample, add noise, upsample, JPEG, darken, gamma.

    ``validate=False`` allows parameters outside the sampling ranges, e.g.
    ``alpha_exp=1, gamma=1`` for the restoration-only chain.
    """
    check_image(y, channels=3)
    if validate:
        p.validate()
    h, w, _ = y.shape
    x = gaussian_blur(y, p.sigma)
    small_h, small_w = max(1, round(h / p.r)), max(1, round(w / p.r))
    x = resize(x, small_h, small_w)
    noise_rng = np.random.default_rng([p.seed, 1])
    x = np.clip(x + noise_rng.standard_normal(x.shape) * (p.delta / 255.0), 0.0, 1.0)
    x = resize(x, h, w)
    x = jpeg_roundtrip(x, p.q)
    x = p.alpha_exp * x
    return hue_preserving_gamma(x, p.gamma)
