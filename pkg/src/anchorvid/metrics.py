"""Desk-scale video metrics and the frame-correlation separability study."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .latents import RandomStream, as_latent
from .prior import GmmVideoPrior, log_likelihood, sample_videos
from .schedule import NoiseSchedule


def dynamic_degree(v) -> float:
    """Mean squared difference between consecutive frames."""
    v = as_latent(v, "video")
    if v.shape[0] < 2:
        raise ValueError("dynamic_degree needs at least 2 frames")
    return float(np.mean(np.diff(v, axis=0) ** 2))


def _cosine_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    na = np.linalg.norm(a, axis=-1)
    nb = np.linalg.norm(b, axis=-1)
    num = np.sum(a * b, axis=-1)
    out = np.where((na > 0) & (nb > 0), num / np.maximum(na * nb, 1e-300), 0.0)
    # two all-constant frames that are equal count as perfectly consistent
    same = (na == 0) & (nb == 0)
    return np.clip(np.where(same, 1.0, out), -1.0, 1.0)


def temporal_consistency(v) -> float:
    """Mean cosine similarity of consecutive mean-centred frames."""
    v = as_latent(v, "video")
    if v.shape[0] < 2:
        raise ValueError("temporal_consistency needs at least 2 frames")
    c = v - v.mean(axis=1, keepdims=True)
    return float(np.mean(_cosine_rows(c[:-1], c[1:])))


@dataclass
class VideoMetrics:
    dynamic_degree: float
    temporal_consistency: float
    video_loglik: float
    anchor_reward: float = float("nan")

    def as_dict(self):
        return asdict(self)


def video_metrics(v, prior: GmmVideoPrior, anchor_reward: Optional[float] = None) -> VideoMetrics:
    v = as_latent(v, "video")
    return VideoMetrics(
        dynamic_degree=dynamic_degree(v),
        temporal_consistency=temporal_consistency(v),
        video_loglik=log_likelihood(prior, v),
        anchor_reward=float("nan") if anchor_reward is None else float(anchor_reward),
    )


# -- separability ----------------------------------------------------------

@dataclass
class GroupCorrelation:
    within: float
    between: float
    gap: float
    gap_se: float

    @property
    def z(self) -> float:
        return self.gap / self.gap_se if self.gap_se > 0 else math.inf


@dataclass
class SeparabilityReport:
    pure_noise: GroupCorrelation
    real: GroupCorrelation
    noisy: GroupCorrelation
    n_videos: int
    terminal_alpha_bar: float

    def rows(self):
        for name in ("pure_noise", "noisy", "real"):
            g = getattr(self, name)
            yield {"group": name, "within": g.within, "between": g.between,
                   "gap": g.gap, "gap_se": g.gap_se}

    def to_csv(self) -> str:
        lines = ["group,within,between,gap,gap_se"]
        for r in self.rows():
            lines.append(f"{r['group']},{r['within']!r},{r['between']!r},{r['gap']!r},{r['gap_se']!r}")
        return "\n".join(lines) + "\n"

    def as_dict(self):
        return {"n_videos": self.n_videos, "terminal_alpha_bar": self.terminal_alpha_bar,
                "groups": list(self.rows())}


def frame_correlations(videos: np.ndarray):
    """Per-video mean within-video and between-video frame correlations.

    Frames are mean-centred and normalised; correlation is their dot product.
    Returns two arrays of length ``n`` (one entry per video).
    """
    n, F, d = videos.shape
    x = videos.reshape(n * F, d)
    x = x - x.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    x = x / np.where(norms > 0, norms, 1.0)
    # per-video frame sums make this O(n F d) instead of a full Gram matrix
    per_video = x.reshape(n, F, d)
    s = per_video.sum(axis=1)                      # (n, d)
    total = s.sum(axis=0)                          # (d,)
    self_dots = np.sum(per_video ** 2, axis=(1, 2))  # sum_i <x_i, x_i>
    within_sum = np.sum(s * s, axis=1) - self_dots
    within = within_sum / (F * (F - 1))
    between = (s @ total - np.sum(s * s, axis=1)) / (F * F * (n - 1))
    return within, between


def _group(videos) -> GroupCorrelation:
    within, between = frame_correlations(videos)
    g = within - between
    n = len(g)
    return GroupCorrelation(float(within.mean()), float(between.mean()), float(g.mean()),
                            float(g.std(ddof=1) / math.sqrt(n)))


def separability_study(prior: GmmVideoPrior, s: NoiseSchedule, n_videos: int,
                       stream: RandomStream, return_data: bool = False):
    """Within- vs between-video frame correlation for real, noisy-at-T and pure-noise videos."""
    if n_videos < 2:
        raise ValueError("separability_study needs n_videos >= 2")
    if prior.F < 2:
        raise ValueError("separability_study needs at least 2 frames")
    shape = (n_videos, prior.F, prior.d)
    real = sample_videos(prior, n_videos, stream.child(0))
    eps = stream.child(1).normal(shape)
    pure = stream.child(2).normal(shape)
    a = float(s.alpha_bars[-1])
    noisy = math.sqrt(a) * real + math.sqrt(1.0 - a) * eps
    report = SeparabilityReport(_group(pure), _group(real), _group(noisy), n_videos, a)
    if return_data:
        return report, {"real": real, "noisy": noisy, "pure_noise": pure}
    return report
