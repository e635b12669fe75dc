"""Reverse-process sampling and partial regeneration over any denoiser.

A denoiser is any object with ``predict_noise(z_t, c, t) -> ndarray``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Protocol

import numpy as np

from .latents import Conditioning, RandomStream, ShapeError, as_latent, sample_standard_noise
from .schedule import (InferenceGrid, NoiseSchedule, ScheduleError, add_noise,
                       steps_at_or_below)


class Denoiser(Protocol):
    def predict_noise(self, z_t, c: Optional[Conditioning], t: int) -> np.ndarray: ...


class NonFiniteError(FloatingPointError):
    """Raised when a stage produces NaN or inf; carries diagnostics."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class CountingDenoiser:
    """Wraps a denoiser and counts forward calls."""

    def __init__(self, inner: Denoiser):
        self.inner = inner
        self.calls = 0

    def predict_noise(self, z_t, c, t):
        self.calls += 1
        return self.inner.predict_noise(z_t, c, t)


MODES = ("ddim_deterministic", "ddpm_ancestral")


@dataclass(frozen=True)
class SamplerConfig:
    grid: InferenceGrid
    mode: str = "ddim_deterministic"
    eta: float = 0.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"sampler mode must be one of {MODES}, got {self.mode!r}")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must be in [0, 1], got {self.eta}")
        if self.mode == "ddim_deterministic" and self.eta != 0.0:
            raise ValueError("ddim_deterministic requires eta = 0")

    @classmethod
    def ancestral(cls, grid: InferenceGrid) -> "SamplerConfig":
        return cls(grid=grid, mode="ddpm_ancestral", eta=1.0)


def predicted_z0(denoiser: Denoiser, z_t, c, t: int, s: NoiseSchedule,
                 eps_hat: Optional[np.ndarray] = None) -> np.ndarray:
    """(z_t - sqrt(1 - a) eps_hat) / sqrt(a)."""
    z_t = as_latent(z_t, "z_t")
    a = s.alpha_bar(t)
    if a <= 0.0:
        raise ScheduleError(f"alpha_bar is zero at t={t}; z0 is not identifiable")
    if eps_hat is None:
        eps_hat = denoiser.predict_noise(z_t, c, t)
    return (z_t - math.sqrt(1.0 - a) * eps_hat) / math.sqrt(a)


def _check_finite(x, stage, t):
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(f"non-finite latent in {stage} at t={t}", stage=stage, t=t,
                             max_abs=float(np.nanmax(np.abs(np.where(np.isfinite(x), x, 0)))))


def denoise_from(z, denoiser: Denoiser, c, steps, cfg: SamplerConfig, s: NoiseSchedule,
                 rng: Optional[np.random.Generator] = None, stage: str = "sample") -> np.ndarray:
    """Run the reverse update over ``steps`` (decreasing). One denoiser call per step.

    The last step returns the predicted z0 without injecting noise.
    """
    z = as_latent(z, "z")
    steps = list(steps)
    for i, t in enumerate(steps):
        eps = np.asarray(denoiser.predict_noise(z, c, t), dtype=np.float64)
        if eps.shape != z.shape:
            raise ShapeError(f"denoiser returned {eps.shape}, expected {z.shape}")
        x0 = predicted_z0(denoiser, z, c, t, s, eps_hat=eps)
        if i == len(steps) - 1:
            z = x0
        else:
            a_t = s.alpha_bar(t)
            a_prev = s.alpha_bar(steps[i + 1])
            sigma = 0.0
            if cfg.eta > 0:
                sigma = cfg.eta * math.sqrt((1 - a_prev) / (1 - a_t) * (1 - a_t / a_prev))
            z = math.sqrt(a_prev) * x0 + math.sqrt(max(1 - a_prev - sigma ** 2, 0.0)) * eps
            if sigma > 0:
                z = z + sigma * rng.standard_normal(z.shape)
        _check_finite(z, stage, t)
    return z


def sample(denoiser: Denoiser, c, cfg: SamplerConfig, s: NoiseSchedule, F: int, d: int,
           stream: RandomStream) -> np.ndarray:
    """Generate from ``z_T ~ N(0, I)`` over the full inference grid."""
    z = sample_standard_noise(stream.child(0), F, d)
    rng = stream.child(1).generator()
    return denoise_from(z, denoiser, c, cfg.grid.descending(), cfg, s, rng, stage="sample")


def regeneration_steps(cfg: SamplerConfig, s: NoiseSchedule, p_re: float) -> list:
    return steps_at_or_below(cfg.grid, p_re, s.T_train)


def regenerate(v, denoiser: Denoiser, c, cfg: SamplerConfig, s: NoiseSchedule, p_re: float,
               stream: RandomStream) -> np.ndarray:
    """Diffuse ``v`` to the highest grid step at or below ``Int(T p_re)`` with fresh
    noise, then denoise over the remaining grid. ``p_re = 0`` is the identity."""
    v = as_latent(v, "video")
    steps = regeneration_steps(cfg, s, p_re)
    if not steps:
        return v
    noise = sample_standard_noise(stream.child(0), *v.shape)
    z = add_noise(v, noise, steps[0], s)
    rng = stream.child(1).generator()
    return denoise_from(z, denoiser, c, steps, cfg, s, rng, stage="regenerate")
