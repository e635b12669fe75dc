"""Gaussian-mixture video prior with an exact optimal denoiser.

Each mode is a mean trajectory ``means[k]`` of shape ``(F, d)`` with
isotropic covariance ``sigma2 * I``. Diffusing the prior to step ``t`` keeps
it a mixture, ``sum_k w_k N(sqrt(a) mu_k, (a sigma2 + 1 - a) I)``, so the
score and the MMSE noise prediction are available in closed form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .latents import Conditioning, RandomStream, ShapeError, as_latent
from .schedule import NoiseSchedule


class UnknownLabelError(KeyError):
    pass


@dataclass(frozen=True, eq=False)
class GmmVideoPrior:
    weights: np.ndarray
    means: np.ndarray
    sigma2: float
    embeddings: Optional[np.ndarray] = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1).copy()
        mu = np.asarray(self.means, dtype=np.float64).copy()
        if mu.ndim == 2:
            mu = mu[:, None, :]
        if mu.ndim != 3 or mu.shape[0] != w.shape[0]:
            raise ShapeError(f"means must be (K, F, d) with K = {w.shape[0]}, got {mu.shape}")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must be positive and sum to 1")
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if not np.all(np.isfinite(mu)):
            raise ValueError("means must be finite")
        emb = np.eye(w.shape[0]) if self.embeddings is None else np.asarray(
            self.embeddings, dtype=np.float64).copy()
        if emb.ndim != 2 or emb.shape[0] != w.shape[0]:
            raise ShapeError("need one embedding row per mode")
        for a in (w, mu, emb):
            a.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "embeddings", emb)
        object.__setattr__(self, "sigma2", float(self.sigma2))

    @property
    def K(self) -> int:
        return int(self.weights.shape[0])

    @property
    def F(self) -> int:
        return int(self.means.shape[1])

    @property
    def d(self) -> int:
        return int(self.means.shape[2])

    @property
    def embedding_dim(self) -> int:
        return int(self.embeddings.shape[1])

    def condition(self, label: int) -> Conditioning:
        if not 0 <= int(label) < self.K:
            raise UnknownLabelError(f"label {label} not in 0..{self.K - 1}")
        return Conditioning(self.embeddings[int(label)], label=int(label))

    def image_marginal(self) -> "GmmVideoPrior":
        """Frame-0 marginal: the same mixture over single-frame latents."""
        return GmmVideoPrior(self.weights, self.means[:, :1, :], self.sigma2, self.embeddings)

    def components(self, c: Optional[Conditioning]):
        """(weights, means) of the mixture, restricted to ``c``'s mode if labelled."""
        if c is None or c.label is None:
            return self.weights, self.means
        k = int(c.label)
        if not 0 <= k < self.K:
            raise UnknownLabelError(f"label {k} not in 0..{self.K - 1}")
        if c.embedding.shape != self.embeddings[k].shape or not np.array_equal(
                c.embedding, self.embeddings[k]):
            raise ValueError(f"conditioning embedding does not match mode {k}")
        return np.ones(1), self.means[k:k + 1]


# type alias: an image prior is a video prior with F = 1
ImageMarginalPrior = GmmVideoPrior


def _check_shape(prior: GmmVideoPrior, v: np.ndarray) -> None:
    if v.shape != (prior.F, prior.d):
        raise ShapeError(f"latent shape {v.shape} does not match prior ({prior.F}, {prior.d})")


def sample_video(prior: GmmVideoPrior, c: Optional[Conditioning], stream: RandomStream) -> np.ndarray:
    w, mu = prior.components(c)
    rng = stream.generator()
    k = int(rng.choice(len(w), p=w)) if len(w) > 1 else 0
    xi = rng.standard_normal((prior.F, prior.d))
    return mu[k] + math.sqrt(prior.sigma2) * xi


def sample_videos(prior: GmmVideoPrior, n: int, stream: RandomStream,
                  return_modes: bool = False):
    """Batch of ``n`` unconditioned draws, shape ``(n, F, d)``."""
    rng = stream.generator()
    ks = rng.choice(prior.K, size=n, p=prior.weights)
    xs = prior.means[ks] + math.sqrt(prior.sigma2) * rng.standard_normal((n, prior.F, prior.d))
    return (xs, ks) if return_modes else xs


def _mixture_logpdf(z: np.ndarray, w: np.ndarray, centers: np.ndarray, var: float) -> float:
    D = z.size
    sq = np.sum((z[None] - centers) ** 2, axis=(1, 2))
    comps = np.log(w) - 0.5 * D * math.log(2 * math.pi * var) - sq / (2 * var)
    return float(logsumexp(comps))


def log_likelihood(prior: GmmVideoPrior, v) -> float:
    v = as_latent(v, "video")
    _check_shape(prior, v)
    return _mixture_logpdf(v, prior.weights, prior.means, prior.sigma2)


def diffused_log_density(prior: GmmVideoPrior, z_t, t: int, s: NoiseSchedule,
                         c: Optional[Conditioning] = None) -> float:
    """Exact log p_t(z_t) of the prior pushed through the forward process."""
    z_t = as_latent(z_t, "z_t")
    _check_shape(prior, z_t)
    a = s.alpha_bar(t)
    w, mu = prior.components(c)
    return _mixture_logpdf(z_t, w, math.sqrt(a) * mu, a * prior.sigma2 + 1.0 - a)


def optimal_predict_noise(prior: GmmVideoPrior, z_t, c: Optional[Conditioning], t: int,
                          s: NoiseSchedule) -> np.ndarray:
    """MMSE noise prediction E[eps | z_t] = -sqrt(1 - a) * grad log p_t(z_t)."""
    z_t = as_latent(z_t, "z_t")
    _check_shape(prior, z_t)
    a = s.alpha_bar(t)
    w, mu = prior.components(c)
    var = a * prior.sigma2 + 1.0 - a
    centers = math.sqrt(a) * mu
    sq = np.sum((z_t[None] - centers) ** 2, axis=(1, 2))
    logr = np.log(w) - sq / (2 * var)
    r = np.exp(logr - logsumexp(logr))
    mean_center = np.tensordot(r, centers, axes=1)
    return math.sqrt(1.0 - a) * (z_t - mean_center) / var


class OracleDenoiser:
    """Closed-form optimal denoiser bound to a prior and schedule."""

    def __init__(self, prior: GmmVideoPrior, schedule: NoiseSchedule):
        self.prior = prior
        self.schedule = schedule

    @property
    def shape(self):
        return (self.prior.F, self.prior.d)

    def predict_noise(self, z_t, c: Optional[Conditioning], t: int) -> np.ndarray:
        return optimal_predict_noise(self.prior, z_t, c, t, self.schedule)


# -- built-in families -----------------------------------------------------

def _bump_means(K, F, d, amplitude, width, velocities, starts, background):
    j = np.arange(d)[None, None, :]
    f = np.arange(F)[None, :, None]
    pos = starts[:, None, None] + velocities[:, None, None] * f
    dist = (j - pos + d / 2.0) % d - d / 2.0  # circular
    return background[:, None, :] + amplitude * np.exp(-0.5 * (dist / width) ** 2)


def translating_bump_prior(K: int = 4, F: int = 16, d: int = 16, sigma2: float = 0.1,
                           amplitude: float = 5.0, width: float = 1.5,
                           velocities: Optional[Sequence[float]] = None,
                           background_scale: float = 2.0,
                           weights: Optional[Sequence[float]] = None,
                           seed: int = 0) -> GmmVideoPrior:
    """Each mode is a Gaussian bump moving at a per-mode velocity over a static
    per-mode background, wrapping around the ``d`` latent coordinates.

    Velocities are in coordinates per frame; they cycle ``0.5, -0.5, 0.75,
    -0.75`` when not given. Backgrounds are ``background_scale * N(0, I)``
    drawn from ``seed``.
    """
    if K < 1 or F < 1 or d < 1:
        raise ValueError("K, F and d must be positive")
    if velocities is None:
        base = [0.5, -0.5, 0.75, -0.75]
        velocities = [base[k % 4] for k in range(K)]
    vel = np.asarray(velocities, dtype=np.float64)
    if vel.shape != (K,):
        raise ValueError(f"need {K} velocities, got {vel.shape[0]}")
    w = np.full(K, 1.0 / K) if weights is None else np.asarray(weights, dtype=np.float64)
    starts = np.arange(K) * d / K
    bg = background_scale * RandomStream(seed).normal((K, d))
    means = _bump_means(K, F, d, amplitude, width, vel, starts, bg)
    return GmmVideoPrior(w / w.sum(), means, sigma2)


def static_bump_prior(K: int = 4, F: int = 16, d: int = 16, sigma2: float = 0.1,
                      amplitude: float = 5.0, width: float = 1.5,
                      background_scale: float = 2.0,
                      weights: Optional[Sequence[float]] = None,
                      seed: int = 0) -> GmmVideoPrior:
    """Same modes as :func:`translating_bump_prior` but with zero velocity."""
    return translating_bump_prior(K, F, d, sigma2, amplitude, width, [0.0] * K,
                                  background_scale, weights, seed)


def means_to_csv(prior: GmmVideoPrior) -> str:
    lines = ["mode,frame," + ",".join(f"c{j}" for j in range(prior.d))]
    for k in range(prior.K):
        for f in range(prior.F):
            vals = ",".join(repr(float(x)) for x in prior.means[k, f])
            lines.append(f"{k},{f},{vals}")
    return "\n".join(lines) + "\n"
