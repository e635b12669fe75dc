"""Score distillation on a video latent: the fixed-noise coarse-to-fine sweep
and the classic resampled-noise baseline."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable, List

import numpy as np

from .metrics import dynamic_degree
from .latents import RandomStream, as_latent, sample_standard_noise
from .sampler import Denoiser, NonFiniteError
from .schedule import InferenceGrid, NoiseSchedule, add_noise, steps_from_terminal

WEIGHT_MODES = ("constant_one", "one_minus_alpha_bar")


@dataclass(frozen=True)
class NiVsdsConfig:
    grid: InferenceGrid
    p: float = 0.4
    alpha: float = 1.0
    weight_mode: str = "constant_one"

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"nivsds.p must be in [0, 1], got {self.p}")
        if not self.alpha >= 0.0:
            raise ValueError(f"nivsds.alpha must be non-negative, got {self.alpha}")
        if self.weight_mode not in WEIGHT_MODES:
            raise ValueError(f"nivsds.weight_mode must be one of {WEIGHT_MODES}")


def weight(mode: str, t: int, s: NoiseSchedule) -> float:
    if mode == "constant_one":
        return 1.0
    return 1.0 - s.alpha_bar(t)


@dataclass
class NiVsdsTrace:
    timesteps: List[int] = field(default_factory=list)
    grad_norms: List[float] = field(default_factory=list)
    dynamic_degrees: List[float] = field(default_factory=list)
    noise_digests: List[str] = field(default_factory=list)

    def __len__(self):
        return len(self.timesteps)

    def to_csv(self) -> str:
        rows = ["iteration,timestep,grad_norm,dynamic_degree"]
        for i, (t, g, dd) in enumerate(zip(self.timesteps, self.grad_norms, self.dynamic_degrees)):
            rows.append(f"{i},{t},{g!r},{dd!r}")
        return "\n".join(rows) + "\n"


def _dynamic_degree(v):
    return dynamic_degree(v) if v.shape[0] > 1 else 0.0


def _digest(a: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(a).tobytes()).hexdigest()[:16]


def nivsds_steps(cfg: NiVsdsConfig, s: NoiseSchedule) -> list:
    return steps_from_terminal(cfg.grid, cfg.p, s.T_train)


def ni_vsds(v_static, denoiser: Denoiser, c, cfg: NiVsdsConfig, s: NoiseSchedule,
            stream: RandomStream,
            noise_fn: Callable[[RandomStream, int, int], np.ndarray] = sample_standard_noise):
    """Single sweep from the terminal step down to ``Int(T p)`` with one noise draw.

    Each iteration diffuses the current latent with the same ``eps``, takes
    ``g = w(t) (eps_hat - eps)`` and steps ``v <- v - alpha g``.
    Returns ``(v, trace)``.
    """
    v = as_latent(v_static, "video").copy()
    eps = noise_fn(stream, *v.shape)
    trace = NiVsdsTrace()
    for t in nivsds_steps(cfg, s):
        v_t = add_noise(v, eps, t, s)
        g = weight(cfg.weight_mode, t, s) * (denoiser.predict_noise(v_t, c, t) - eps)
        trace.timesteps.append(t)
        trace.grad_norms.append(float(np.linalg.norm(g)))
        trace.noise_digests.append(_digest(eps))
        if not np.all(np.isfinite(g)):
            trace.dynamic_degrees.append(float("nan"))
            raise NonFiniteError(f"non-finite NI-VSDS gradient at t={t}", stage="nivsds",
                                 t=t, trace=trace)
        if cfg.alpha != 0.0:
            v = v - cfg.alpha * g
        trace.dynamic_degrees.append(_dynamic_degree(v))
    return v, trace


def vanilla_sds(v, denoiser: Denoiser, c, iters: int, alpha: float, s: NoiseSchedule,
                stream: RandomStream, weight_mode: str = "constant_one") -> np.ndarray:
    """Classic SDS with the latent as its own generator: fresh ``(eps, t)`` each
    iteration, ``t`` uniform on ``1..T``."""
    if iters < 0:
        raise ValueError("iters must be >= 0")
    v = as_latent(v, "video").copy()
    for i in range(iters):
        rng = stream.child(i).generator()
        t = int(rng.integers(1, s.T_train + 1))
        eps = rng.standard_normal(v.shape)
        g = weight(weight_mode, t, s) * (denoiser.predict_noise(add_noise(v, eps, t, s), c, t) - eps)
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite SDS gradient at iteration {i}", stage="vanilla_sds", t=t)
        v = v - alpha * g
    return v
