"""Guided ancestral sampling loop.

Each timestep computes the reverse mean and variance once, then alternates
guidance gradient / guided resample / clean-estimate refresh ``N - 1`` times
before drawing ``x_{t-1}`` from the last guided distribution. The gradient is
taken with respect to the clean estimate and applied directly as the mean
shift. The run issues exactly ``T * N`` predictor calls.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .diffusion import (
    NoiseSchedule,
    guided_transition,
    forward_sample,
    make_schedule,
    predict_x0,
    reverse_mean,
)
from .image_core import InvalidInputError, check_image
from .photometric import (
    ExposureMap,
    build_exposure_map,
    exposure_grad,
    exposure_loss,
    reflectance_grad,
    reflectance_loss,
    retinex_decompose,
)
from .predictors import NoisePredictor
from .sasi import (
    Restorer,
    adain_align,
    mse_injection_loss,
    structural_grad,
    structural_grad_full,
)

log = logging.getLogger(__name__)

__all__ = [
    "GuidanceConfig",
    "TraceRecord",
    "GuidanceContext",
    "SamplingError",
    "BatchResult",
    "build_context",
    "total_gradient",
    "run_pasdiff",
    "restore_batch",
    "write_trace_csv",
    "read_trace_csv",
    "TRACE_COLUMNS",
]


class SamplingError(RuntimeError):
    """A component failed inside the sampling loop."""

    def __init__(self, t: int, inner: int, cause: BaseException):
        super().__init__(f"sampling failed at t={t}, round={inner}: {cause}")
        self.t = t
        self.inner = inner


@dataclass
class GuidanceConfig:
    T: int = 10
    N: int = 2
    s: float = 1.0
    lambda_exp: float = 1200.0
    lambda_ref: float = 0.03
    lambda_stru: float = 10000.0
    enable_exp: bool = True
    enable_ref: bool = True
    enable_stru: bool = True
    injection_mode: str = "sasi"
    retinex_grad_mode: str = "frozen"
    stru_grad_mode: str = "frozen"
    exposure_base: float = 0.55
    exposure_amplitude: float = 0.15
    seed: int = 0

    def __post_init__(self):
        if self.T < 1 or self.N < 1:
            raise InvalidInputError(f"T and N must be >= 1, got T={self.T}, N={self.N}")
        if self.s < 0:
            raise InvalidInputError(f"guidance scale must be >= 0, got {self.s}")
        for name in ("lambda_exp", "lambda_ref", "lambda_stru"):
            if getattr(self, name) < 0:
                raise InvalidInputError(f"{name} must be >= 0")
        if self.injection_mode not in ("sasi", "mse"):
            raise InvalidInputError(f"injection_mode must be 'sasi' or 'mse', got {self.injection_mode!r}")
        for name in ("retinex_grad_mode", "stru_grad_mode"):
            if getattr(self, name) not in ("frozen", "full"):
                raise InvalidInputError(f"{name} must be 'frozen' or 'full'")


TRACE_COLUMNS = ("t", "inner", "L_exp", "L_ref", "L_stru", "L_total", "grad_norm", "predictor_calls")


@dataclass
class TraceRecord:
    """Losses at one gradient evaluation. ``L_exp``/``L_ref``/``L_stru`` are
    unweighted; ``L_total`` is the weighted sum actually differentiated."""

    t: int = 0
    inner: int = 0
    L_exp: float = 0.0
    L_ref: float = 0.0
    L_stru: float = 0.0
    L_total: float = 0.0
    grad_norm: float = 0.0
    predictor_calls: int = 0


@dataclass
class GuidanceContext:
    exposure_map: ExposureMap
    r_ref: np.ndarray
    restorer: Restorer | None
    cfg: GuidanceConfig


def build_context(y0: np.ndarray, restorer: Restorer | None, cfg: GuidanceConfig) -> GuidanceContext:
    m = build_exposure_map(y0, cfg.exposure_base, cfg.exposure_amplitude)
    return GuidanceContext(m, retinex_decompose(y0).reflectance, restorer, cfg)


def total_gradient(x0_hat: np.ndarray, ctx: GuidanceContext) -> tuple[np.ndarray, TraceRecord]:
    cfg = ctx.cfg
    grad = np.zeros_like(x0_hat, dtype=np.float64)
    rec = TraceRecord()
    if cfg.enable_exp:
        rec.L_exp = exposure_loss(x0_hat, ctx.exposure_map)
        grad += cfg.lambda_exp * exposure_grad(x0_hat, ctx.exposure_map)
    if cfg.enable_ref:
        rec.L_ref = reflectance_loss(x0_hat, ctx.r_ref)
        grad += cfg.lambda_ref * reflectance_grad(x0_hat, ctx.r_ref, cfg.retinex_grad_mode)
    if cfg.enable_stru:
        if ctx.restorer is None:
            raise InvalidInputError("structural guidance enabled without a restorer")
        if cfg.injection_mode == "mse":
            rec.L_stru, target = mse_injection_loss(x0_hat, ctx.restorer)
            grad += cfg.lambda_stru * structural_grad(x0_hat, target)
        else:
            prior_out = np.asarray(ctx.restorer.restore(x0_hat), dtype=np.float64)
            target = adain_align(prior_out, x0_hat)
            rec.L_stru = float(np.mean((x0_hat - target) ** 2))
            if cfg.stru_grad_mode == "full":
                grad += cfg.lambda_stru * structural_grad_full(x0_hat, prior_out)
            else:
                grad += cfg.lambda_stru * structural_grad(x0_hat, target)
    rec.L_total = (
        cfg.lambda_exp * rec.L_exp + cfg.lambda_ref * rec.L_ref + cfg.lambda_stru * rec.L_stru
    )
    rec.grad_norm = float(np.linalg.norm(grad))
    return grad, rec


def run_pasdiff(
    y0: np.ndarray,
    predictor: NoisePredictor,
    restorer: Restorer | None,
    cfg: GuidanceConfig,
    sched: NoiseSchedule | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, list[TraceRecord]]:
    """Restore ``y0``; returns the clamped final clean estimate and the trace."""
    check_image(y0, channels=3)
    if sched is None:
        sched = make_schedule(cfg.T)
    if sched.T != cfg.T:
        raise InvalidInputError(f"schedule has {sched.T} steps but config asks for T={cfg.T}")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)

    ctx = build_context(y0, restorer, cfg)
    x = forward_sample(y0, cfg.T, rng.standard_normal(y0.shape), sched)
    calls = 0
    trace: list[TraceRecord] = []
    x0_hat = y0

    def refresh(x_t: np.ndarray, t: int) -> tuple[np.ndarray, np.ndarray]:
        nonlocal calls
        eps_hat = np.asarray(predictor.predict(x_t, t, sched), dtype=np.float64)
        calls += 1
        return eps_hat, predict_x0(x_t, eps_hat, t, sched)

    def guide(x0: np.ndarray, t: int, inner: int) -> np.ndarray:
        g, rec = total_gradient(x0, ctx)
        rec.t, rec.inner, rec.predictor_calls = t, inner, calls
        trace.append(rec)
        return g

    for t in range(cfg.T, 0, -1):
        inner = 0
        try:
            eps_hat, x0_hat = refresh(x, t)
            mu = reverse_mean(x, eps_hat, t, sched)
            var = sched.posterior_var_at(t) if t > 1 else 0.0
            g = None
            for inner in range(cfg.N - 1):
                g = guide(x0_hat, t, inner)
                x = guided_transition(mu, var, g, cfg.s, rng)
                _, x0_hat = refresh(x, t)
            if g is None:
                g = guide(x0_hat, t, 0)
            x = guided_transition(mu, var, g, cfg.s, rng)
        except SamplingError:
            raise
        except Exception as exc:
            raise SamplingError(t, inner, exc) from exc
    return np.clip(x0_hat, 0.0, 1.0), trace


@dataclass
class BatchResult:
    image: np.ndarray | None
    trace: list[TraceRecord] = field(default_factory=list)
    error: str | None = None


def restore_batch(
    inputs: Sequence[np.ndarray],
    predictor: NoisePredictor,
    restorer: Restorer | None,
    cfg: GuidanceConfig,
    seeds: Sequence[int],
    sched: NoiseSchedule | None = None,
    threads: int = 1,
) -> list[BatchResult]:
    """Independent runs, one per input with its own seed. Failures are
    recorded on the result and do not stop the batch."""
    if len(inputs) != len(seeds):
        raise InvalidInputError(f"{len(inputs)} inputs but {len(seeds)} seeds")
    shapes = {np.shape(img) for img in inputs}
    if len(shapes) > 1:
        raise InvalidInputError(f"batch shapes differ: {sorted(shapes)}")
    sched = sched or make_schedule(cfg.T)

    def one(item: tuple[np.ndarray, int]) -> BatchResult:
        img, seed = item
        try:
            out, trace = run_pasdiff(img, predictor, restorer, cfg, sched, np.random.default_rng(seed))
        except Exception as exc:
            log.warning("restoration failed for seed %d: %s", seed, exc)
            return BatchResult(None, [], str(exc))
        return BatchResult(out, trace)

    items = list(zip(inputs, seeds))
    if threads <= 1:
        return [one(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, items))


def write_trace_csv(trace: Sequence[TraceRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for rec in trace:
            row = asdict(rec)
            writer.writerow(
                [row["t"], row["inner"]]
                + [f"{row[k]:.6g}" for k in TRACE_COLUMNS[2:7]]
                + [row["predictor_calls"]]
            )


def read_trace_csv(path: str | Path) -> list[TraceRecord]:
    types = {f.name: f.type for f in fields(TraceRecord)}
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            kw = {}
            for k in TRACE_COLUMNS:
                kw[k] = int(row[k]) if types[k] in (int, "int") else float(row[k])
            out.append(TraceRecord(**kw))
    return out
