"""Central finite-difference checks for every analytic guidance gradient."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .photometric import (
    build_exposure_map,
    exposure_grad,
    exposure_loss,
    reflectance_grad,
    reflectance_surrogate_loss,
    retinex_decompose,
)
from .sampler import GuidanceConfig, build_context, total_gradient
from .sasi import UnsharpRestorer, adain_align, mse_injection_loss, structural_grad

__all__ = [
    "GradcheckResult",
    "finite_difference",
    "relative_error",
    "SUITES",
    "run_suite",
    "run_gradcheck",
]

FD_STEP = 1e-4


@dataclass
class GradcheckResult:
    name: str
    max_rel_error: float
    tolerance: float
    trials: int

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name:<18} max_rel_err={self.max_rel_error:.3e} tol={self.tolerance:.0e} trials={self.trials}"


def finite_difference(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    grad = np.zeros_like(x)
    xp = x.copy()
    for idx in np.ndindex(x.shape):
        orig = xp[idx]
        xp[idx] = orig + h
        up = f(xp)
        xp[idx] = orig - h
        down = f(xp)
        xp[idx] = orig
        grad[idx] = (up - down) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.abs(analytic).max(), np.abs(numeric).max())
    if scale == 0:
        return 0.0
    return float(np.abs(analytic - numeric).max() / scale)


# Each case builds (objective, analytic gradient) at a random point.
def _exposure_case(rng, grad_fn=exposure_grad):
    x = rng.uniform(0, 1, (8, 8, 3))
    m = build_exposure_map(rng.uniform(0, 1, (8, 8, 3)))
    return x, (lambda z: exposure_loss(z, m)), grad_fn(x, m)


def _reflectance_case(rng, grad_fn=reflectance_grad):
    x = rng.uniform(0.05, 1, (8, 8, 3))
    r_ref = retinex_decompose(rng.uniform(0.05, 1, (8, 8, 3))).reflectance
    L = retinex_decompose(x).illumination
    return x, (lambda z: reflectance_surrogate_loss(z, r_ref, L)), grad_fn(x, r_ref)


def _structural_case(rng, grad_fn=structural_grad):
    x = rng.uniform(0, 1, (8, 8, 3))
    target = adain_align(UnsharpRestorer(1.0, 1.0).restore(x), x)
    return x, (lambda z: float(np.mean((z - target) ** 2))), grad_fn(x, target)


def _mse_case(rng, grad_fn=structural_grad):
    x = rng.uniform(0, 1, (8, 8, 3))
    _, target = mse_injection_loss(x, UnsharpRestorer(1.0, 1.0))
    return x, (lambda z: float(np.mean((z - target) ** 2))), grad_fn(x, target)


def _total_case(rng, grad_fn=None):
    y0 = rng.uniform(0.05, 1, (8, 8, 3))
    x = rng.uniform(0.05, 1, (8, 8, 3))
    cfg = GuidanceConfig()
    ctx = build_context(y0, UnsharpRestorer(1.0, 1.0), cfg)
    L = retinex_decompose(x).illumination
    target = adain_align(ctx.restorer.restore(x), x)

    def objective(z):
        return (
            cfg.lambda_exp * exposure_loss(z, ctx.exposure_map)
            + cfg.lambda_ref * reflectance_surrogate_loss(z, ctx.r_ref, L)
            + cfg.lambda_stru * float(np.mean((z - target) ** 2))
        )

    g = grad_fn(x, ctx) if grad_fn else total_gradient(x, ctx)[0]
    return x, objective, g


SUITES = {
    "exposure": (_exposure_case, 1e-3),
    "reflectance": (_reflectance_case, 1e-3),
    "structural": (_structural_case, 1e-6),
    "mse_injection": (_mse_case, 1e-6),
    "total": (_total_case, 1e-3),
}


def run_suite(name: str, seed: int = 0, trials: int = 20, grad_fn=None) -> GradcheckResult:
    """Worst relative error of one gradient over ``trials`` random 8x8x3 points.

    ``grad_fn`` replaces the analytic gradient under test (used to confirm a
    broken gradient is caught).
    """
    case, tol = SUITES[name]
    rng = np.random.default_rng([seed, list(SUITES).index(name)])
    worst = 0.0
    for _ in range(trials):
        x, objective, analytic = case(rng, grad_fn) if grad_fn else case(rng)
        worst = max(worst, relative_error(analytic, finite_difference(objective, x)))
    return GradcheckResult(name, worst, tol, trials)


def run_gradcheck(seed: int = 0, trials: int = 20, overrides: dict | None = None) -> list[GradcheckResult]:
    overrides = overrides or {}
    return [run_suite(name, seed, trials, overrides.get(name)) for name in SUITES]
