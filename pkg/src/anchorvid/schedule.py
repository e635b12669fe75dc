"""Discrete noise schedules, forward diffusion and the inference grid.

Timesteps are 1-based throughout: ``t`` runs over ``1..T_train`` and
``alpha_bars[t - 1]`` is the cumulative signal coefficient at ``t``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .latents import as_latent, check_same_shape


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    betas: np.ndarray
    alpha_bars: np.ndarray

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64).copy()
        abar = np.asarray(self.alpha_bars, dtype=np.float64).copy()
        if betas.ndim != 1 or betas.shape != abar.shape or betas.size < 1:
            raise ScheduleError("betas and alpha_bars must be equal-length 1-D arrays")
        if np.any(abar < 0) or np.any(abar > 1):
            raise ScheduleError("alpha_bars must lie in [0, 1]")
        if np.any(np.diff(abar) >= 0):
            raise ScheduleError("alpha_bars must be strictly decreasing")
        for a in (betas, abar):
            a.setflags(write=False)
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alpha_bars", abar)

    @property
    def T_train(self) -> int:
        return int(self.betas.shape[0])

    def alpha_bar(self, t: int) -> float:
        self.check_t(t)
        return float(self.alpha_bars[t - 1])

    def check_t(self, t: int) -> None:
        if not 1 <= int(t) <= self.T_train:
            raise ScheduleError(f"timestep {t} outside 1..{self.T_train}")

    def snr(self) -> np.ndarray:
        return self.alpha_bars / (1.0 - self.alpha_bars)

    @classmethod
    def from_alpha_bars(cls, alpha_bars) -> "NoiseSchedule":
        """Build a schedule from its cumulative coefficients.

        Allows the degenerate endpoints ``alpha_bar = 0`` (the ``beta_T -> 1``
        limit) and ``alpha_bar = 1`` (no corruption) for handcrafted cases.
        """
        abar = np.asarray(alpha_bars, dtype=np.float64)
        prev = np.concatenate([[1.0], abar[:-1]])
        betas = 1.0 - abar / prev
        return cls(betas=betas, alpha_bars=abar)


def make_schedule(kind: str, beta_start: float, beta_end: float, T_train: int) -> NoiseSchedule:
    """``linear`` spaces beta evenly; ``scaled_linear`` spaces sqrt(beta) evenly."""
    if int(T_train) < 1:
        raise ScheduleError(f"T_train must be >= 1, got {T_train}")
    if not 0 < beta_start <= beta_end < 1:
        raise ScheduleError(
            f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    T_train = int(T_train)
    if kind == "linear":
        betas = np.linspace(beta_start, beta_end, T_train, dtype=np.longdouble)
    elif kind == "scaled_linear":
        betas = np.linspace(np.sqrt(np.longdouble(beta_start)), np.sqrt(np.longdouble(beta_end)),
                            T_train, dtype=np.longdouble) ** 2
    else:
        raise ScheduleError(f"unknown schedule kind {kind!r}")
    # products of ~1000 near-one factors: accumulate in extended precision
    abar = np.cumprod(np.longdouble(1) - betas)
    return NoiseSchedule(betas=betas.astype(np.float64), alpha_bars=abar.astype(np.float64))


def terminal_snr(s: NoiseSchedule) -> float:
    a = float(s.alpha_bars[-1])
    return a / (1.0 - a)


def add_noise(z0, eps, t: int, s: NoiseSchedule) -> np.ndarray:
    z0 = as_latent(z0, "z0")
    eps = as_latent(eps, "eps")
    check_same_shape(z0, eps, "add_noise")
    a = s.alpha_bar(t)
    return math.sqrt(a) * z0 + math.sqrt(1.0 - a) * eps


@dataclass(frozen=True, eq=False)
class InferenceGrid:
    """Increasing timesteps visited (in reverse) during denoising."""

    steps: np.ndarray

    def __post_init__(self):
        steps = np.asarray(self.steps, dtype=np.int64).copy()
        if steps.ndim != 1 or steps.size < 1:
            raise ScheduleError("inference grid must be a non-empty 1-D sequence")
        if np.any(np.diff(steps) <= 0) or steps[0] < 1:
            raise ScheduleError("inference grid must be strictly increasing and >= 1")
        steps.setflags(write=False)
        object.__setattr__(self, "steps", steps)

    def __len__(self) -> int:
        return int(self.steps.size)

    def __eq__(self, other):
        return isinstance(other, InferenceGrid) and np.array_equal(self.steps, other.steps)

    @property
    def terminal(self) -> int:
        return int(self.steps[-1])

    def descending(self):
        return [int(t) for t in self.steps[::-1]]


def make_inference_grid(s: NoiseSchedule, n_steps: int) -> InferenceGrid:
    """Uniform stride anchored at the terminal step: ``round(linspace(T, 1, n))``."""
    T = s.T_train
    if not 1 <= int(n_steps) <= T:
        raise ScheduleError(f"n_steps must be in 1..{T}, got {n_steps}")
    steps = np.unique(np.round(np.linspace(T, 1, int(n_steps))).astype(np.int64))
    if steps.size != n_steps or steps[-1] != T:
        raise ScheduleError(f"could not build a {n_steps}-step grid over 1..{T}")
    return InferenceGrid(steps)


def cut_timestep(p: float, T_train: int) -> int:
    """``Int(T * p)`` with Int taken as floor."""
    if not 0.0 <= p <= 1.0:
        raise ScheduleError(f"fraction must be in [0, 1], got {p}")
    # guard against products like 0.29 * 100 = 28.999999999999996
    return int(math.floor(T_train * p + 1e-9))


def cut_index(grid: InferenceGrid, p: float, T_train: int) -> int:
    """Position of the smallest grid timestep ``>= Int(T_train * p)``.

    ``len(grid) - cut_index`` is the number of grid steps from the terminal
    step down to the cut, inclusive.
    """
    tau = cut_timestep(p, T_train)
    idx = int(np.searchsorted(grid.steps, tau, side="left"))
    return min(idx, len(grid) - 1)


def steps_from_terminal(grid: InferenceGrid, p: float, T_train: int) -> list:
    """Grid timesteps ``T, ..., >= Int(T p)`` in decreasing order."""
    return [int(t) for t in grid.steps[cut_index(grid, p, T_train):][::-1]]


def steps_at_or_below(grid: InferenceGrid, p: float, T_train: int) -> list:
    """Grid timesteps ``<= Int(T p)`` in decreasing order (the denoising tail)."""
    tau = cut_timestep(p, T_train)
    return [int(t) for t in grid.steps[grid.steps <= tau][::-1]]


def schedule_table_csv(s: NoiseSchedule) -> str:
    lines = ["t,beta,alpha_bar,snr"]
    snr = s.snr()
    for i in range(s.T_train):
        lines.append(f"{i + 1},{s.betas[i]!r},{s.alpha_bars[i]!r},{snr[i]!r}")
    return "\n".join(lines) + "\n"
