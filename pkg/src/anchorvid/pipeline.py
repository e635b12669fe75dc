"""End-to-end orchestration: anchor image -> static video -> NI-VSDS ->
regeneration, with ablation switches and a denoiser-call cost ledger."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from .anchor import make_reward, select_anchor, synthesize_candidates
from .config import PipelineConfig
from .latents import (BASELINE, NIVSDS, REGEN, RandomStream, ShapeError, as_latent,
                      load_latent, replicate_image)
from .learned import train
from .metrics import VideoMetrics, video_metrics
from .nivsds import NiVsdsConfig, NiVsdsTrace, ni_vsds
from .prior import GmmVideoPrior, OracleDenoiser, static_bump_prior, translating_bump_prior
from .sampler import CountingDenoiser, SamplerConfig, regenerate, sample
from .schedule import NoiseSchedule, make_inference_grid, make_schedule


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class CostLedger:
    """Denoiser forward calls per stage. One F-frame call costs 1c, an image call 1/F c."""

    frames: int
    image_calls: int = 0
    nivsds_calls: int = 0
    regen_calls: int = 0
    baseline_calls: int = 0

    @property
    def image_cost(self) -> Fraction:
        return Fraction(self.image_calls, self.frames)

    @property
    def cost_in_c(self) -> Fraction:
        return self.image_cost + self.nivsds_calls + self.regen_calls + self.baseline_calls

    def as_dict(self):
        return {"frames": self.frames, "image_calls": self.image_calls,
                "nivsds_calls": self.nivsds_calls, "regen_calls": self.regen_calls,
                "baseline_calls": self.baseline_calls,
                "image_cost_c": str(self.image_cost), "cost_in_c": str(self.cost_in_c)}


@dataclass
class Context:
    """Everything a run needs that does not depend on the seed."""

    cfg: PipelineConfig
    schedule: NoiseSchedule
    prior: GmmVideoPrior
    image_prior: GmmVideoPrior
    sampler: SamplerConfig
    nivsds: NiVsdsConfig
    video_denoiser: object
    image_denoiser: object
    train_reports: dict = field(default_factory=dict)


def build_schedule(cfg: PipelineConfig) -> NoiseSchedule:
    s = cfg.schedule
    return make_schedule(s.kind, s.beta_start, s.beta_end, s.T)


def build_prior(cfg: PipelineConfig) -> GmmVideoPrior:
    p = cfg.prior
    kw = dict(K=p.K, F=p.F, d=p.d, sigma2=p.sigma2, amplitude=p.amplitude, width=p.width,
              background_scale=p.background_scale, seed=p.seed)
    if p.family == "static_bump":
        return static_bump_prior(**kw)
    return translating_bump_prior(velocities=p.velocities, **kw)


def train_denoisers(cfg: PipelineConfig, schedule, prior, image_prior):
    t = cfg.train
    root = RandomStream(cfg.prior.seed)
    video, vrep = train(prior, schedule, t.epochs, t.batch, t.lr, root.child(0), t.hidden,
                        t.steps_per_epoch)
    image, irep = train(image_prior, schedule, t.epochs, t.batch, t.lr, root.child(1), t.hidden,
                        t.steps_per_epoch)
    return video, image, {"video": vrep, "image": irep}


def build_context(cfg: PipelineConfig, video_denoiser=None, image_denoiser=None) -> Context:
    schedule = build_schedule(cfg)
    prior = build_prior(cfg)
    image_prior = prior.image_marginal()
    grid = make_inference_grid(schedule, cfg.sampler.steps)
    scfg = SamplerConfig(grid=grid, mode=cfg.sampler.mode, eta=cfg.sampler.eta)
    ncfg = NiVsdsConfig(grid=grid, p=cfg.nivsds.p, alpha=cfg.nivsds.alpha,
                        weight_mode=cfg.nivsds.weight_mode)
    reports = {}
    if video_denoiser is None or image_denoiser is None:
        if cfg.pipeline.denoiser == "learned":
            video_denoiser, image_denoiser, reports = _stage(
                "train", train_denoisers, cfg, schedule, prior, image_prior)
        else:
            video_denoiser = OracleDenoiser(prior, schedule)
            image_denoiser = OracleDenoiser(image_prior, schedule)
    return Context(cfg, schedule, prior, image_prior, scfg, ncfg, video_denoiser,
                   image_denoiser, reports)


@dataclass
class RunResult:
    video: np.ndarray
    ledger: CostLedger
    metrics: VideoMetrics
    anchor: Optional[np.ndarray] = None
    anchor_index: Optional[int] = None
    anchor_scores: Optional[np.ndarray] = None
    static_video: Optional[np.ndarray] = None
    animated_video: Optional[np.ndarray] = None
    trace: Optional[NiVsdsTrace] = None


def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except StageError:
        raise
    except Exception as exc:  # tagged and re-raised for the CLI exit-code mapping
        raise StageError(name, exc) from exc


def run_i4vgen(cfg: PipelineConfig, ctx: Optional[Context] = None,
               anchor_image=None) -> RunResult:
    """Anchor synthesis and selection, replication to F frames, NI-VSDS, regeneration.

    ``anchor_image`` (or ``anchor.override_path``) replaces the generation and
    selection step with a provided single-frame latent.
    """
    ctx = ctx or build_context(cfg)
    prior, s = ctx.prior, ctx.schedule
    F, d = prior.F, prior.d
    stream = RandomStream(cfg.pipeline.seed)
    c = prior.condition(cfg.pipeline.label)
    ledger = CostLedger(frames=F)
    reward = make_reward(cfg.anchor.reward, ctx.image_prior, c)

    if anchor_image is None and cfg.anchor.override_path:
        anchor_image = load_latent(cfg.anchor.override_path)
    scores, index = None, None
    if anchor_image is not None:
        anchor = as_latent(anchor_image, "anchor image")
        if anchor.shape != (1, d):
            raise StageError("anchor", ShapeError(f"anchor image must be (1, {d}), got {anchor.shape}"))
        anchor_reward = _stage("anchor", reward, anchor, c)
    else:
        image_dn = CountingDenoiser(ctx.image_denoiser)
        cands = _stage("anchor", synthesize_candidates, image_dn, c, ctx.sampler, s, cfg.N, d, stream)
        anchor, index, scores = _stage("anchor", select_anchor, cands, reward, c)
        anchor_reward = float(scores[index])
        ledger.image_calls = image_dn.calls

    static = replicate_image(anchor, F)
    video, trace = static, None
    if not cfg.pipeline.skip_nivsds:
        dn = CountingDenoiser(ctx.video_denoiser)
        video, trace = _stage("nivsds", ni_vsds, static, dn, c, ctx.nivsds, s, stream.child(NIVSDS))
        ledger.nivsds_calls = dn.calls
    animated = video
    if not cfg.pipeline.skip_regeneration:
        dn = CountingDenoiser(ctx.video_denoiser)
        video = _stage("regenerate", regenerate, animated, dn, c, ctx.sampler, s,
                       cfg.pipeline.p_re, stream.child(REGEN))
        ledger.regen_calls = dn.calls

    metrics = _stage("metrics", video_metrics, video, prior, anchor_reward)
    return RunResult(video=video, ledger=ledger, metrics=metrics, anchor=anchor,
                     anchor_index=index, anchor_scores=scores, static_video=static,
                     animated_video=animated, trace=trace)


def run_baseline(cfg: PipelineConfig, ctx: Optional[Context] = None) -> RunResult:
    """Plain sampling from pure noise on the same denoiser and grid."""
    ctx = ctx or build_context(cfg)
    prior = ctx.prior
    c = prior.condition(cfg.pipeline.label)
    dn = CountingDenoiser(ctx.video_denoiser)
    video = _stage("sample", sample, dn, c, ctx.sampler, ctx.schedule, prior.F, prior.d,
                   RandomStream(cfg.pipeline.seed).child(BASELINE))
    ledger = CostLedger(frames=prior.F, baseline_calls=dn.calls)
    metrics = _stage("metrics", video_metrics, video, prior, None)
    return RunResult(video=video, ledger=ledger, metrics=metrics)


ABLATION_MODES = {
    "full": {},
    "skip_selection": {"skip_selection": True},
    "skip_nivsds": {"skip_nivsds": True},
    "skip_regeneration": {"skip_regeneration": True},
}


def ablation_config(cfg: PipelineConfig, mode: str, seed: Optional[int] = None) -> PipelineConfig:
    if mode not in ABLATION_MODES and mode != "baseline":
        raise ValueError(f"unknown ablation mode {mode!r}")
    changes = dict(ABLATION_MODES.get(mode, {}))
    if seed is not None:
        changes["seed"] = seed
    return cfg.replace(pipeline=changes)


def run_mode(cfg: PipelineConfig, mode: str, seed: int, ctx: Context) -> RunResult:
    run_cfg = ablation_config(cfg, mode, seed)
    if mode == "baseline":
        return run_baseline(run_cfg, ctx)
    return run_i4vgen(run_cfg, ctx)
