"""Exposure and reflectance guidance terms with their analytic gradients.

All losses use mean reduction over their elements so the weights do not
depend on resolution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .image_core import (
    InvalidInputError,
    blur_matrix,
    check_image,
    gaussian_blur,
    minmax_norm,
    to_intensity,
)

__all__ = [
    "EXPOSURE_BASE",
    "EXPOSURE_AMPLITUDE",
    "ILLUMINATION_FLOOR",
    "REFLECTANCE_MAX",
    "ExposureMap",
    "RetinexPair",
    "build_exposure_map",
    "exposure_loss",
    "exposure_grad",
    "retinex_sigma",
    "retinex_decompose",
    "reflectance_loss",
    "reflectance_grad",
    "reflectance_surrogate_loss",
    "phy_loss",
]

EXPOSURE_BASE = 0.55
EXPOSURE_AMPLITUDE = 0.15
ILLUMINATION_FLOOR = 1e-2
REFLECTANCE_MAX = 3.0
RETINEX_SIGMA_256 = 15.0


@dataclass(frozen=True)
class ExposureMap:
    values: np.ndarray
    base: float = EXPOSURE_BASE
    amplitude: float = EXPOSURE_AMPLITUDE


@dataclass(frozen=True)
class RetinexPair:
    illumination: np.ndarray
    reflectance: np.ndarray


def build_exposure_map(
    y0: np.ndarray, base: float = EXPOSURE_BASE, amplitude: float = EXPOSURE_AMPLITUDE
) -> ExposureMap:
    """Per-pixel brightness target: darker-than-average pixels get higher targets."""
    intensity = to_intensity(y0)
    values = base + amplitude * minmax_norm(intensity.mean() - intensity)
    return ExposureMap(values, base, amplitude)


def _check_exposure_args(x0_hat: np.ndarray, m: ExposureMap) -> None:
    check_image(x0_hat)
    if x0_hat.shape[:2] != m.values.shape:
        raise InvalidInputError(f"spatial dims differ: {x0_hat.shape[:2]} vs {m.values.shape}")


def exposure_loss(x0_hat: np.ndarray, m: ExposureMap) -> float:
    _check_exposure_args(x0_hat, m)
    diff = x0_hat.mean(axis=2) - m.values
    return float(np.mean(diff**2))


def exposure_grad(x0_hat: np.ndarray, m: ExposureMap) -> np.ndarray:
    _check_exposure_args(x0_hat, m)
    h, w, c = x0_hat.shape
    diff = x0_hat.mean(axis=2) - m.values
    g = 2.0 * diff / (c * h * w)
    return np.repeat(g[:, :, None], c, axis=2)


def retinex_sigma(height: int, width: int) -> float:
    """Illumination blur width, 15 px at 256 px and proportional otherwise."""
    return RETINEX_SIGMA_256 * max(height, width) / 256.0


def _illumination_raw(img: np.ndarray) -> np.ndarray:
    h, w, _ = img.shape
    return gaussian_blur(img.max(axis=2), retinex_sigma(h, w))


def retinex_decompose(img: np.ndarray) -> RetinexPair:
    """Classical max-RGB/blur decomposition ``img ~= R * L``."""
    check_image(img, channels=3)
    L = np.clip(_illumination_raw(img), ILLUMINATION_FLOOR, 1.0)
    R = np.clip(img / L[:, :, None], 0.0, REFLECTANCE_MAX)
    return RetinexPair(L, R)


def _check_pair(x0_hat: np.ndarray, r_ref: np.ndarray) -> None:
    check_image(x0_hat, channels=3)
    if x0_hat.shape != np.shape(r_ref):
        raise InvalidInputError(f"shape mismatch: {x0_hat.shape} vs {np.shape(r_ref)}")


def reflectance_loss(x0_hat: np.ndarray, r_ref: np.ndarray) -> float:
    _check_pair(x0_hat, r_ref)
    R = retinex_decompose(x0_hat).reflectance
    return float(np.mean((R - r_ref) ** 2))


def reflectance_surrogate_loss(x: np.ndarray, r_ref: np.ndarray, illumination: np.ndarray) -> float:
    """Reflectance loss with the illumination held at ``illumination``."""
    R = np.clip(x / illumination[:, :, None], 0.0, REFLECTANCE_MAX)
    return float(np.mean((R - r_ref) ** 2))


def reflectance_grad(x0_hat: np.ndarray, r_ref: np.ndarray, mode: str = "frozen") -> np.ndarray:
    """Gradient of :func:`reflectance_loss`.

    ``mode="frozen"`` differentiates with the illumination treated as a
    constant (the default used during guidance). ``mode="full"`` also
    propagates through the illumination clamp, the blur and the max-RGB
    selection.
    """
    _check_pair(x0_hat, r_ref)
    if mode not in ("frozen", "full"):
        raise InvalidInputError(f"unknown reflectance gradient mode {mode!r}")
    h, w, c = x0_hat.shape
    n = x0_hat.size
    raw_L = _illumination_raw(x0_hat)
    L = np.clip(raw_L, ILLUMINATION_FLOOR, 1.0)[:, :, None]
    raw_R = x0_hat / L
    active = (raw_R >= 0.0) & (raw_R <= REFLECTANCE_MAX)
    dR = np.where(active, 2.0 * (np.clip(raw_R, 0.0, REFLECTANCE_MAX) - r_ref) / n, 0.0)
    grad = dR / L
    if mode == "frozen":
        return grad

    dL = -(dR * x0_hat).sum(axis=2) / L[:, :, 0] ** 2
    dL = np.where((raw_L > ILLUMINATION_FLOOR) & (raw_L < 1.0), dL, 0.0)
    sigma = retinex_sigma(h, w)
    d_max = blur_matrix(h, sigma).T @ dL @ blur_matrix(w, sigma)
    argmax = x0_hat.argmax(axis=2)
    onehot = np.arange(c)[None, None, :] == argmax[:, :, None]
    return grad + onehot * d_max[:, :, None]


def phy_loss(
    x0_hat: np.ndarray,
    m: ExposureMap,
    r_ref: np.ndarray,
    lambda_exp: float,
    lambda_ref: float,
    mode: str = "frozen",
) -> tuple[float, np.ndarray]:
    """Weighted exposure + reflectance energy and its gradient."""
    loss = 0.0
    grad = np.zeros_like(x0_hat, dtype=np.float64)
    if lambda_exp:
        loss += lambda_exp * exposure_loss(x0_hat, m)
        grad += lambda_exp * exposure_grad(x0_hat, m)
    if lambda_ref:
        loss += lambda_ref * reflectance_loss(x0_hat, r_ref)
        grad += lambda_ref * reflectance_grad(x0_hat, r_ref, mode)
    return loss, grad
