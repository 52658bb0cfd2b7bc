"""DDPM schedule and transition algebra.

Timesteps are 1-based: ``schedule.beta[t - 1]`` is beta at step ``t``.
Accessors on :class:`NoiseSchedule` take the 1-based index directly and treat
``alpha_bar(0)`` as 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .image_core import InvalidInputError

__all__ = [
    "SingularityError",
    "NoiseSchedule",
    "DiffusionState",
    "make_schedule",
    "schedule_from_betas",
    "forward_sample",
    "predict_x0",
    "reverse_mean",
    "guided_transition",
]


class SingularityError(ArithmeticError):
    """A formula would divide by zero for the requested timestep."""


@dataclass(frozen=True)
class NoiseSchedule:
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    posterior_var: np.ndarray

    @property
    def T(self) -> int:
        return len(self.beta)

    def _check_t(self, t: int) -> int:
        if not 1 <= t <= self.T:
            raise InvalidInputError(f"timestep {t} outside 1..{self.T}")
        return t - 1

    def beta_at(self, t: int) -> float:
        return float(self.beta[self._check_t(t)])

    def alpha_at(self, t: int) -> float:
        return float(self.alpha[self._check_t(t)])

    def alpha_bar_at(self, t: int) -> float:
        if t == 0:
            return 1.0
        return float(self.alpha_bar[self._check_t(t)])

    def posterior_var_at(self, t: int) -> float:
        return float(self.posterior_var[self._check_t(t)])

    def validate(self) -> None:
        b = self.beta
        if not np.all((b > 0) & (b < 1)):
            raise InvalidInputError("beta must lie strictly inside (0, 1)")
        if not np.allclose(self.alpha, 1.0 - b, rtol=0, atol=1e-15):
            raise InvalidInputError("alpha != 1 - beta")
        if np.any(np.diff(self.alpha_bar) >= 0):
            raise InvalidInputError("alpha_bar must be strictly decreasing")
        if not np.allclose(self.alpha_bar, np.cumprod(self.alpha), rtol=0, atol=1e-12):
            raise InvalidInputError("alpha_bar != cumulative product of alpha")
        prev = np.concatenate([[1.0], self.alpha_bar[:-1]])
        expected = b * (1.0 - prev) / (1.0 - self.alpha_bar)
        if not np.allclose(self.posterior_var, expected, rtol=0, atol=1e-15):
            raise InvalidInputError("posterior variance inconsistent with beta")


@dataclass
class DiffusionState:
    x_t: np.ndarray
    t: int
    eps_hat: np.ndarray
    x0_hat: np.ndarray


def schedule_from_betas(betas) -> NoiseSchedule:
    beta = np.asarray(betas, dtype=np.float64).ravel()
    if beta.size < 1:
        raise InvalidInputError("schedule needs at least one step")
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    prev = np.concatenate([[1.0], alpha_bar[:-1]])
    posterior_var = beta * (1.0 - prev) / (1.0 - alpha_bar)
    sched = NoiseSchedule(beta, alpha, alpha_bar, posterior_var)
    sched.validate()
    return sched


def make_schedule(T: int = 10, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    """Linear beta schedule over exactly ``T`` steps."""
    if T < 1:
        raise InvalidInputError(f"T must be >= 1, got {T}")
    if not 0 < beta_start <= beta_end < 1:
        raise InvalidInputError(f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    return schedule_from_betas(np.linspace(beta_start, beta_end, T))


def _same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if np.shape(a) != np.shape(b):
        raise InvalidInputError(f"shape mismatch: {np.shape(a)} vs {np.shape(b)}")


def forward_sample(x0, t: int, eps, sched: NoiseSchedule) -> np.ndarray:
    """Closed-form q(x_t | x_0) draw for a given noise tensor."""
    _same_shape(x0, eps)
    ab = sched.alpha_bar_at(t)
    return np.sqrt(ab) * np.asarray(x0) + np.sqrt(1.0 - ab) * np.asarray(eps)


def predict_x0(x_t, eps_hat, t: int, sched: NoiseSchedule) -> np.ndarray:
    _same_shape(x_t, eps_hat)
    ab = sched.alpha_bar_at(t)
    if ab <= 0:
        raise SingularityError(f"alpha_bar is zero at t={t}")
    return (np.asarray(x_t) - np.sqrt(1.0 - ab) * np.asarray(eps_hat)) / np.sqrt(ab)


def reverse_mean(x_t, eps_hat, t: int, sched: NoiseSchedule) -> np.ndarray:
    """Mean of p(x_{t-1} | x_t) under the epsilon parameterization."""
    _same_shape(x_t, eps_hat)
    a, b, ab = sched.alpha_at(t), sched.beta_at(t), sched.alpha_bar_at(t)
    return (np.asarray(x_t) - b / np.sqrt(1.0 - ab) * np.asarray(eps_hat)) / np.sqrt(a)


def guided_transition(mean, variance: float, g, s: float, rng: np.random.Generator) -> np.ndarray:
    """Draw from N(mean - s * variance * g, variance * I).

    With ``variance == 0`` the shifted mean is returned and ``rng`` is untouched.
    """
    if variance < 0:
        raise InvalidInputError(f"variance must be >= 0, got {variance}")
    mean = np.asarray(mean, dtype=np.float64)
    _same_shape(mean, g)
    shifted = mean - s * variance * np.asarray(g)
    if variance == 0:
        return shifted
    return shifted + np.sqrt(variance) * rng.standard_normal(mean.shape)
