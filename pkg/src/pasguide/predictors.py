"""Noise predictors eps(x_t, t).

No trained network ships with this package. Two exact predictors stand in:
``ExactPredictor`` knows the clean image, and ``MixturePredictor`` returns the
Bayes-optimal noise estimate when the data distribution is a finite, uniform
mixture of gallery images.
"""

from __future__ import annotations

from pathlib import Path
from typing import Protocol, Sequence, runtime_checkable

import numpy as np
from scipy.special import logsumexp

from .diffusion import NoiseSchedule, SingularityError
from .image_core import InvalidInputError, check_image, load_image

__all__ = [
    "NoisePredictor",
    "GalleryPrior",
    "exact_eps",
    "mixture_weights",
    "mixture_posterior_mean",
    "mixture_predict",
    "ExactPredictor",
    "MixturePredictor",
    "ExternalPredictor",
    "CountingPredictor",
]


@runtime_checkable
class NoisePredictor(Protocol):
    def predict(self, x_t: np.ndarray, t: int, sched: NoiseSchedule) -> np.ndarray: ...


class GalleryPrior:
    """Empirical data distribution: equally weighted point masses at ``images``."""

    def __init__(self, images: Sequence[np.ndarray]):
        if len(images) == 0:
            raise InvalidInputError("gallery must contain at least one image")
        shape = np.shape(images[0])
        for img in images:
            check_image(img)
            if img.shape != shape:
                raise InvalidInputError(f"gallery shapes differ: {img.shape} vs {shape}")
        self.images = [np.asarray(img, dtype=np.float64) for img in images]
        self._stack = np.stack(self.images)
        self._flat = self._stack.reshape(len(self.images), -1)
        self._sq_norms = np.einsum("ij,ij->i", self._flat, self._flat)

    def __len__(self) -> int:
        return len(self.images)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.images[0].shape

    @classmethod
    def from_dir(cls, path: str | Path) -> "GalleryPrior":
        files = sorted(Path(path).glob("*.png"))
        if not files:
            raise InvalidInputError(f"no PNG files in {path}")
        return cls([load_image(f) for f in files])


def exact_eps(x_t, x0, t: int, sched: NoiseSchedule) -> np.ndarray:
    """The noise that maps ``x0`` to ``x_t`` at step ``t``."""
    ab = sched.alpha_bar_at(t)
    if ab >= 1:
        raise SingularityError(f"alpha_bar == 1 at t={t}")
    return (np.asarray(x_t) - np.sqrt(ab) * np.asarray(x0)) / np.sqrt(1.0 - ab)


def _check_alpha_bar(ab: float, t: int) -> None:
    if not 0 < ab < 1:
        raise SingularityError(f"alpha_bar={ab} at t={t} is outside (0, 1)")


def mixture_weights(x_t, t: int, sched: NoiseSchedule, prior: GalleryPrior) -> np.ndarray:
    """Posterior responsibilities of each gallery image given ``x_t``."""
    ab = sched.alpha_bar_at(t)
    _check_alpha_bar(ab, t)
    x = np.asarray(x_t, dtype=np.float64).ravel()
    if x.size != prior._flat.shape[1]:
        raise InvalidInputError(f"x_t shape {np.shape(x_t)} does not match gallery {prior.shape}")
    # ||x - sqrt(ab) y||^2 expanded; the ||x||^2 term is shared and cancels
    sq = ab * prior._sq_norms - 2.0 * np.sqrt(ab) * (prior._flat @ x)
    logits = -sq / (2.0 * (1.0 - ab))
    return np.exp(logits - logsumexp(logits))


def mixture_posterior_mean(x_t, t: int, sched: NoiseSchedule, prior: GalleryPrior) -> np.ndarray:
    w = mixture_weights(x_t, t, sched, prior)
    return np.tensordot(w, prior._stack, axes=1)


def mixture_predict(x_t, t: int, sched: NoiseSchedule, prior: GalleryPrior) -> np.ndarray:
    ab = sched.alpha_bar_at(t)
    x0_mean = mixture_posterior_mean(x_t, t, sched, prior)
    return (np.asarray(x_t) - np.sqrt(ab) * x0_mean) / np.sqrt(1.0 - ab)


class ExactPredictor:
    """Oracle predictor for a known clean image."""

    def __init__(self, x0: np.ndarray):
        self.x0 = np.asarray(x0, dtype=np.float64)

    def predict(self, x_t, t, sched):
        return exact_eps(x_t, self.x0, t, sched)


class MixturePredictor:
    def __init__(self, prior: GalleryPrior):
        self.prior = prior

    def predict(self, x_t, t, sched):
        return mixture_predict(x_t, t, sched, self.prior)


class ExternalPredictor:
    """Extension point for a predictor running out of process.

    The intended protocol exchanges ``x_t`` and ``t`` through files or a
    subprocess pipe and reads back the predicted noise. Not wired up.
    """

    def __init__(self, command: Sequence[str] | None = None):
        self.command = list(command or [])

    def predict(self, x_t, t, sched):
        raise NotImplementedError("external noise predictors are not available in this build")


class CountingPredictor:
    """Wraps a predictor and counts ``predict`` calls."""

    def __init__(self, inner: NoisePredictor):
        self.inner = inner
        self.calls = 0

    def predict(self, x_t, t, sched):
        self.calls += 1
        return self.inner.predict(x_t, t, sched)
