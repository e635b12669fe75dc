"""Anchor image stage: best-of-N generation and reward-based selection."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np

from .latents import ANCHOR, Conditioning, RandomStream, ShapeError, as_latent
from .prior import GmmVideoPrior, log_likelihood
from .sampler import Denoiser, SamplerConfig, sample
from .schedule import NoiseSchedule


class RewardFn:
    """Scores a single-frame latent; higher is better."""

    name = "reward"

    def score(self, image: np.ndarray, c: Optional[Conditioning]) -> float:
        raise NotImplementedError

    def __call__(self, image, c=None) -> float:
        return self.score(image, c)


class GmmLogLikReward(RewardFn):
    """Log-density under the image prior, restricted to ``c``'s mode when labelled."""

    name = "gmm_loglik"

    def __init__(self, image_prior: GmmVideoPrior):
        if image_prior.F != 1:
            raise ShapeError("gmm_loglik reward needs a single-frame (image) prior")
        self.image_prior = image_prior

    def score(self, image, c=None) -> float:
        image = as_latent(image, "image")
        w, mu = self.image_prior.components(c)
        if len(w) == 1:
            D = image.size
            var = self.image_prior.sigma2
            return float(-0.5 * D * math.log(2 * math.pi * var)
                         - np.sum((image - mu[0]) ** 2) / (2 * var))
        return log_likelihood(self.image_prior, image)


class NegDistanceReward(RewardFn):
    """``-||x - target||^2``; ignores the conditioning."""

    name = "neg_distance"

    def __init__(self, target):
        self.target = as_latent(target, "target")

    def score(self, image, c=None) -> float:
        image = as_latent(image, "image")
        if image.shape != self.target.shape:
            raise ShapeError(f"image {image.shape} vs target {self.target.shape}")
        return float(-np.sum((image - self.target) ** 2))


def make_reward(name: str, image_prior: GmmVideoPrior, c: Optional[Conditioning] = None) -> RewardFn:
    if name == "gmm_loglik":
        return GmmLogLikReward(image_prior)
    if name == "neg_distance":
        k = 0 if c is None or c.label is None else c.label
        return NegDistanceReward(image_prior.means[k])
    raise ValueError(f"unknown reward {name!r}")


@dataclass
class CandidateSet:
    images: list
    scores: Optional[np.ndarray] = None
    selected_index: Optional[int] = None

    def __len__(self):
        return len(self.images)


def synthesize_candidate(i: int, denoiser: Denoiser, c, cfg: SamplerConfig, s: NoiseSchedule,
                         d: int, stream: RandomStream) -> np.ndarray:
    """Candidate ``i`` is drawn on substream ``[ANCHOR, i]`` of ``stream``."""
    return sample(denoiser, c, cfg, s, 1, d, stream.child(ANCHOR, i))


def synthesize_candidates(denoiser: Denoiser, c, cfg: SamplerConfig, s: NoiseSchedule, N: int,
                          d: int, stream: RandomStream,
                          order: Optional[Iterable[int]] = None) -> CandidateSet:
    if N < 1:
        raise ValueError(f"need N >= 1 candidates, got {N}")
    order = range(N) if order is None else list(order)
    images = {i: synthesize_candidate(i, denoiser, c, cfg, s, d, stream) for i in order}
    if sorted(images) != list(range(N)):
        raise ValueError("order must be a permutation of range(N)")
    return CandidateSet([images[i] for i in range(N)])


def argmax_first(scores) -> int:
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise ValueError("no scores")
    if not np.all(np.isfinite(scores)):
        raise FloatingPointError("non-finite reward score")
    return int(np.argmax(scores))  # numpy returns the first maximum


def select_anchor(cands: CandidateSet, reward: Callable, c=None):
    """Score every candidate; returns ``(image, index, scores)`` and fills ``cands``."""
    if len(cands) == 0:
        raise ValueError("empty candidate set")
    scores = np.array([reward(x, c) for x in cands.images], dtype=np.float64)
    idx = argmax_first(scores)
    cands.scores = scores
    cands.selected_index = idx
    return cands.images[idx], idx, scores
