"""Structural guidance from an external restorer, with AdaIN style removal.

The restorer's output is re-normalized to the per-channel mean and standard
deviation of the current clean estimate before it is used as a target, so
only its spatial structure, not its brightness or color cast, drives the
gradient. Restorer outputs and statistics are treated as constants when
differentiating.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Protocol, runtime_checkable

import numpy as np

from .image_core import InvalidInputError, gaussian_blur

__all__ = [
    "ADAIN_EPS",
    "Restorer",
    "ChannelStats",
    "channel_stats",
    "adain_align",
    "structural_loss",
    "structural_grad",
    "structural_grad_full",
    "mse_injection_loss",
    "IdentityRestorer",
    "UnsharpRestorer",
    "FunctionRestorer",
    "ExternalRestorer",
    "unsharp_restorer",
    "RESTORERS",
    "make_restorer",
]

ADAIN_EPS = 1e-5


@runtime_checkable
class Restorer(Protocol):
    def restore(self, x: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class ChannelStats:
    mean: np.ndarray
    std: np.ndarray


def channel_stats(img: np.ndarray) -> ChannelStats:
    """Per-channel spatial mean and population standard deviation."""
    img = np.asarray(img, dtype=np.float64)
    return ChannelStats(img.mean(axis=(0, 1)), img.std(axis=(0, 1)))


def adain_align(prior_out: np.ndarray, x0_hat: np.ndarray, eps_n: float = ADAIN_EPS) -> np.ndarray:
    if np.shape(prior_out) != np.shape(x0_hat):
        raise InvalidInputError(f"shape mismatch: {np.shape(prior_out)} vs {np.shape(x0_hat)}")
    if eps_n <= 0:
        raise InvalidInputError(f"eps_n must be > 0, got {eps_n}")
    p, x = channel_stats(prior_out), channel_stats(x0_hat)
    return x.std * (prior_out - p.mean) / (p.std + eps_n) + x.mean


def _restore(restorer: Restorer, x: np.ndarray) -> np.ndarray:
    out = np.asarray(restorer.restore(x), dtype=np.float64)
    if out.shape != x.shape:
        raise InvalidInputError(f"restorer changed shape {x.shape} -> {out.shape}")
    if not np.all(np.isfinite(out)):
        raise InvalidInputError("restorer produced non-finite values")
    return out


def structural_loss(x0_hat: np.ndarray, restorer: Restorer) -> tuple[float, np.ndarray]:
    """Return the loss and the aligned target it was measured against."""
    aligned = adain_align(_restore(restorer, x0_hat), x0_hat)
    return float(np.mean((x0_hat - aligned) ** 2)), aligned


def structural_grad(x0_hat: np.ndarray, aligned_target: np.ndarray) -> np.ndarray:
    if np.shape(x0_hat) != np.shape(aligned_target):
        raise InvalidInputError(f"shape mismatch: {np.shape(x0_hat)} vs {np.shape(aligned_target)}")
    return 2.0 * (x0_hat - aligned_target) / x0_hat.size


def structural_grad_full(x0_hat: np.ndarray, prior_out: np.ndarray, eps_n: float = ADAIN_EPS) -> np.ndarray:
    """Gradient that also flows through the mean/std of ``x0_hat`` in the alignment.

    The restorer output ``prior_out`` stays a constant.
    """
    p = channel_stats(prior_out)
    x = channel_stats(x0_hat)
    z = (prior_out - p.mean) / (p.std + eps_n)
    d = x0_hat - (x.std * z + x.mean)
    n_pix = x0_hat.shape[0] * x0_hat.shape[1]
    safe_std = np.where(x.std > 0, x.std, 1.0)
    dstd = np.where(x.std > 0, (x0_hat - x.mean) / (n_pix * safe_std), 0.0)
    back = dstd * (d * z).sum(axis=(0, 1)) + d.sum(axis=(0, 1)) / n_pix
    return 2.0 * (d - back) / x0_hat.size


def mse_injection_loss(x0_hat: np.ndarray, restorer: Restorer) -> tuple[float, np.ndarray]:
    """Plain MSE to the restorer output, without style alignment (ablation)."""
    target = _restore(restorer, x0_hat)
    return float(np.mean((x0_hat - target) ** 2)), target


class IdentityRestorer:
    def restore(self, x):
        return np.array(x, dtype=np.float64, copy=True)


class UnsharpRestorer:
    def __init__(self, amount: float = 1.0, sigma: float = 1.0):
        if amount < 0 or sigma <= 0:
            raise InvalidInputError(f"need amount >= 0 and sigma > 0, got {amount}, {sigma}")
        self.amount = amount
        self.sigma = sigma

    def restore(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.clip(x + self.amount * (x - gaussian_blur(x, self.sigma)), 0.0, 1.0)


class FunctionRestorer:
    """Adapts a plain ``image -> image`` callable."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray]):
        self.fn = fn

    def restore(self, x):
        return self.fn(x)


class ExternalRestorer:
    """Placeholder for an out-of-process restoration network."""

    def __init__(self, command=None):
        self.command = command

    def restore(self, x):
        raise NotImplementedError("external restorers are not available in this build")


def unsharp_restorer(amount: float = 1.0, sigma: float = 1.0) -> UnsharpRestorer:
    return UnsharpRestorer(amount, sigma)


RESTORERS: dict[str, Callable[..., Restorer]] = {
    "identity": IdentityRestorer,
    "unsharp": UnsharpRestorer,
    "external": ExternalRestorer,
}


def make_restorer(name: str, **kwargs) -> Restorer:
    try:
        factory = RESTORERS[name]
    except KeyError:
        raise InvalidInputError(f"unknown restorer {name!r}; choose from {sorted(RESTORERS)}") from None
    return factory(**kwargs)
